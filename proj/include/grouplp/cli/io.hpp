#pragma once
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>
#include <Eigen/Core>
#include <grouplp/errors.hpp>
#include <grouplp/multitask.hpp>
#include <grouplp/partition.hpp>

namespace grouplp::cli {

/// File could not be opened, read or written.
class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents; the message names file and line.
class ParseError : public InvalidInput
{
public:
    using InvalidInput::InvalidInput;
};

/// Shortest representation that parses back to the same double; "inf", "-inf", "nan".
inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

inline bool parse_double(std::string_view s, double& out)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "inf" || s == "+inf") {
        out = std::numeric_limits<double>::infinity();
        return true;
    }
    if (s == "-inf") {
        out = -std::numeric_limits<double>::infinity();
        return true;
    }
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path);
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("cannot write " + path);
}

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  ///< 1-based source line of each row
};

/// Header row, then data rows of the same width. Blank lines and lines starting with '#' are skipped.
inline CsvTable read_csv(const std::string& path)
{
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto fields = split_fields(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (!have_header) throw ParseError(path + ": missing header row");
    return t;
}

inline double field_double(const CsvTable& t, const std::string& path, std::size_t row, std::size_t col)
{
    double v = 0;
    if (!parse_double(t.rows[row][col], v) || std::isnan(v)) {
        throw ParseError(path + ":" + std::to_string(t.line_numbers[row]) + ": column '" + t.header[col] +
                         "': not a number: '" + t.rows[row][col] + "'");
    }
    return v;
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path)
{
    const auto t = read_csv(path);
    if (t.rows.empty()) throw ParseError(path + ": no data rows");
    Eigen::MatrixXd M(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < t.header.size(); ++j)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = field_double(t, path, i, j);
    return M;
}

/// Single-column file (header + one value per line).
inline Eigen::VectorXd read_vector_csv(const std::string& path)
{
    const auto M = read_matrix_csv(path);
    if (M.cols() != 1) throw ParseError(path + ": expected exactly one column");
    return M.col(0);
}

inline std::string matrix_to_csv(const Eigen::MatrixXd& M, const std::vector<std::string>& header)
{
    std::string s;
    for (std::size_t j = 0; j < header.size(); ++j) s += (j ? "," : "") + header[j];
    s += "\n";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) s += (j ? "," : "") + format_double(M(i, j));
        s += "\n";
    }
    return s;
}

inline std::vector<std::string> numbered_header(const std::string& prefix, Eigen::Index count)
{
    std::vector<std::string> h;
    for (Eigen::Index j = 0; j < count; ++j) h.push_back(prefix + std::to_string(j));
    return h;
}

struct GroupSpec
{
    std::vector<std::string> names;
    GroupPartition partition;
};

/// "name,start,size" per group; groups must tile [0, dim) in order.
inline GroupSpec read_groups(const std::string& path, std::size_t dim)
{
    const auto t = read_csv(path);
    if (t.header != std::vector<std::string>{"name", "start", "size"})
        throw ParseError(path + ": header must be name,start,size");
    GroupSpec g;
    std::vector<std::size_t> sizes;
    std::size_t next = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto where = path + ":" + std::to_string(t.line_numbers[i]) + ": ";
        const double start = field_double(t, path, i, 1), size = field_double(t, path, i, 2);
        if (start != std::floor(start) || size != std::floor(size) || start < 0 || size < 1)
            throw ParseError(where + "start and size must be integers, size >= 1");
        if (static_cast<std::size_t>(start) != next)
            throw ParseError(where + "group '" + t.rows[i][0] + "' starts at " + t.rows[i][1] + ", expected " +
                             std::to_string(next) + " (groups must be contiguous)");
        g.names.push_back(t.rows[i][0]);
        sizes.push_back(static_cast<std::size_t>(size));
        next += static_cast<std::size_t>(size);
    }
    if (next != dim)
        throw ParseError(path + ": groups cover " + std::to_string(next) + " columns, design has " + std::to_string(dim));
    g.partition = GroupPartition(std::move(sizes));
    return g;
}

inline std::string groups_to_csv(const GroupSpec& g)
{
    std::string s = "name,start,size\n";
    for (std::size_t j = 0; j < g.partition.group_count(); ++j)
        s += g.names[j] + "," + std::to_string(g.partition.offset(j)) + "," + std::to_string(g.partition.size(j)) + "\n";
    return s;
}

/// Groups of the stacked multi-task problem: one per feature, size m.
inline GroupSpec multitask_groups(std::size_t d, std::size_t m)
{
    GroupSpec g{{}, GroupPartition::uniform(d, m)};
    for (std::size_t j = 0; j < d; ++j) g.names.push_back("x" + std::to_string(j));
    return g;
}

/// Long format: task,label,x0,...,x{d-1}; tasks numbered from 0 and listed in order.
inline std::string tasks_to_csv(const TaskCollection& tc)
{
    std::string s = "task,label";
    for (std::size_t j = 0; j < tc.dim(); ++j) s += ",x" + std::to_string(j);
    s += "\n";
    for (std::size_t k = 0; k < tc.task_count(); ++k) {
        const auto& t = tc.tasks[k];
        for (Eigen::Index i = 0; i < t.X.rows(); ++i) {
            s += std::to_string(k) + "," + format_double(t.labels[i]);
            for (Eigen::Index j = 0; j < t.X.cols(); ++j) s += "," + format_double(t.X(i, j));
            s += "\n";
        }
    }
    return s;
}

inline TaskCollection read_tasks_csv(const std::string& path)
{
    const auto t = read_csv(path);
    if (t.header.size() < 3 || t.header[0] != "task" || t.header[1] != "label")
        throw ParseError(path + ": header must be task,label,x0,...");
    if (t.rows.empty()) throw ParseError(path + ": no data rows");
    const auto d = static_cast<Eigen::Index>(t.header.size() - 2);
    std::vector<std::vector<std::size_t>> rows_of;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double k = field_double(t, path, i, 0);
        if (k < 0 || k != std::floor(k) || k > 1e7)
            throw ParseError(path + ":" + std::to_string(t.line_numbers[i]) + ": task must be a non-negative integer");
        const auto kk = static_cast<std::size_t>(k);
        if (kk >= rows_of.size()) rows_of.resize(kk + 1);
        rows_of[kk].push_back(i);
    }
    TaskCollection tc;
    for (std::size_t k = 0; k < rows_of.size(); ++k) {
        if (rows_of[k].empty()) throw ParseError(path + ": task " + std::to_string(k) + " has no rows");
        Task task{Eigen::MatrixXd(static_cast<Eigen::Index>(rows_of[k].size()), d),
                  Eigen::VectorXd(static_cast<Eigen::Index>(rows_of[k].size()))};
        for (std::size_t r = 0; r < rows_of[k].size(); ++r) {
            const auto i = rows_of[k][r];
            const double label = field_double(t, path, i, 1);
            if (label != 1.0 && label != -1.0)
                throw ParseError(path + ":" + std::to_string(t.line_numbers[i]) + ": label must be -1 or 1");
            task.labels[static_cast<Eigen::Index>(r)] = label;
            for (Eigen::Index j = 0; j < d; ++j)
                task.X(static_cast<Eigen::Index>(r), j) = field_double(t, path, i, static_cast<std::size_t>(j + 2));
        }
        tc.tasks.push_back(std::move(task));
    }
    return tc;
}

} // namespace grouplp::cli
