#pragma once
#include <grouplp/errors.hpp>
#include <grouplp/partition.hpp>
#include <grouplp/norms.hpp>
#include <grouplp/glm.hpp>
#include <grouplp/projection.hpp>
#include <grouplp/solver.hpp>
#include <grouplp/multitask.hpp>
