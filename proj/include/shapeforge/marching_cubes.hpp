#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "shapeforge/core.hpp"
#include "shapeforge/mesh.hpp"
#include "shapeforge/volume.hpp"

namespace shapeforge {
namespace detail {

// 256-case marching-cubes triangle table. Each row lists triangles as
// triples of cell-edge ids, -1 terminated. Corner i sits at
// (i&1, (i>>1)&1, (i>>2)&1); config bit i is set when corner i is inside.
inline constexpr int kMcEdgeCorners[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3}, {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

inline constexpr int kMcTriTable[256][16] = {
    {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  4,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 5,  0,  9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  8,  9,  4,  9,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 1, 10,  4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 1, 10,  8,  1,  8,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 9,  5,  1, 10,  9,  1,  9,  4,  0,  9, 10,  4, -1, -1, -1, -1},
    { 9,  5,  1, 10,  9,  1,  8,  9, 10, -1, -1, -1, -1, -1, -1, -1},
    {11,  1,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  0,  5, 11,  8,  5,  8,  1,  4,  8, 11,  1, -1, -1, -1, -1},
    { 0,  9, 11,  0, 11,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11,  1,  4,  8, 11,  4,  9, 11,  8, -1, -1, -1, -1, -1, -1, -1},
    {10,  4,  5, 10,  5, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  0,  5, 11,  8,  5, 10,  8, 11, -1, -1, -1, -1, -1, -1, -1},
    {10,  4,  0,  9, 10,  0, 11, 10,  9, -1, -1, -1, -1, -1, -1, -1},
    { 9, 10,  8, 11, 10,  9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 6,  2,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  4,  6,  0,  6,  2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 6,  2,  9,  5,  6,  9,  6,  0,  8,  6,  5,  0, -1, -1, -1, -1},
    { 6,  2,  9,  5,  6,  9,  4,  6,  5, -1, -1, -1, -1, -1, -1, -1},
    { 2,  8,  4,  1,  2,  4,  2, 10,  6,  2,  1, 10, -1, -1, -1, -1},
    { 1, 10,  6,  2,  1,  6,  0,  1,  2, -1, -1, -1, -1, -1, -1, -1},
    { 9,  5,  2,  5,  1,  2,  1,  6,  2,  6,  1, 10,  4,  0,  8, -1},
    { 5,  1,  9,  9,  1,  2,  1, 10,  2, 10,  6,  2, -1, -1, -1, -1},
    { 6,  2,  8,  5, 11,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11,  2,  0,  5, 11,  0, 11,  6,  2,  4, 11,  1, 11,  4,  6, -1},
    { 6,  1,  0,  8,  6,  0,  6, 11,  1,  9,  6,  2,  6,  9, 11, -1},
    { 9, 11,  2, 11,  4,  2,  4,  6,  2,  4, 11,  1, -1, -1, -1, -1},
    { 2, 11, 10,  6,  2, 10,  2,  5, 11,  4,  2,  8,  2,  4,  5, -1},
    {11, 10,  6,  0, 11,  6,  2,  0,  6,  5, 11,  0, -1, -1, -1, -1},
    { 0,  8,  4,  2, 10,  6,  2,  9, 10,  9, 11, 10, -1, -1, -1, -1},
    { 2,  9,  6,  9, 10,  6,  9, 11, 10, -1, -1, -1, -1, -1, -1, -1},
    { 7,  9,  2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 7,  9,  0,  4,  7,  0,  7,  8,  2,  7,  4,  8, -1, -1, -1, -1},
    { 5,  0,  2,  5,  2,  7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  8,  2,  7,  4,  2,  5,  4,  7, -1, -1, -1, -1, -1, -1, -1},
    { 7,  9,  2,  4,  1, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 7, 10,  8,  2,  7,  8,  7,  1, 10,  0,  7,  9,  7,  0,  1, -1},
    {10,  7,  5,  1, 10,  5, 10,  2,  7,  0, 10,  4, 10,  0,  2, -1},
    { 7,  5,  2,  5, 10,  2, 10,  8,  2,  5,  1, 10, -1, -1, -1, -1},
    { 2,  7, 11,  1,  2, 11,  2,  5,  9,  2,  1,  5, -1, -1, -1, -1},
    { 2,  7,  8,  7, 11,  8, 11,  4,  8,  4, 11,  1,  5,  9,  0, -1},
    { 2,  7, 11,  1,  2, 11,  0,  2,  1, -1, -1, -1, -1, -1, -1, -1},
    {11,  1,  4, 11,  4,  8,  7, 11,  8,  2,  7,  8, -1, -1, -1, -1},
    { 2,  4,  5,  9,  2,  5,  2, 10,  4, 11,  2,  7,  2, 11, 10, -1},
    { 5,  9,  0,  7,  8,  2,  7, 11,  8, 11, 10,  8, -1, -1, -1, -1},
    { 0,  2,  7, 10,  0,  7, 11, 10,  7,  0, 10,  4, -1, -1, -1, -1},
    { 7, 11,  2, 11,  8,  2, 11, 10,  8, -1, -1, -1, -1, -1, -1, -1},
    { 7,  9,  8,  7,  8,  6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 7,  9,  0,  4,  7,  0,  6,  7,  4, -1, -1, -1, -1, -1, -1, -1},
    { 5,  0,  8,  6,  5,  8,  7,  5,  6, -1, -1, -1, -1, -1, -1, -1},
    { 7,  4,  6,  7,  5,  4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 1,  9,  8,  4,  1,  8,  1,  7,  9,  6,  1, 10,  1,  6,  7, -1},
    { 6,  7, 10,  7,  0, 10,  0,  1, 10,  0,  7,  9, -1, -1, -1, -1},
    { 4,  0,  8,  5, 10,  6,  7,  5,  6,  1, 10,  5, -1, -1, -1, -1},
    {10,  6,  1,  6,  5,  1,  6,  7,  5, -1, -1, -1, -1, -1, -1, -1},
    { 1,  6,  7, 11,  1,  7,  1,  8,  6,  9,  1,  5,  1,  9,  8, -1},
    { 5,  9,  0,  7,  1,  4,  6,  7,  4, 11,  1,  7, -1, -1, -1, -1},
    { 1,  0,  8,  7,  1,  8,  6,  7,  8, 11,  1,  7, -1, -1, -1, -1},
    { 1,  4, 11,  4,  7, 11,  4,  6,  7, -1, -1, -1, -1, -1, -1, -1},
    { 7, 10,  6, 11, 10,  7,  9,  8,  4,  5,  9,  4, -1, -1, -1, -1},
    {10,  6, 11,  6,  7, 11,  0,  5,  9, -1, -1, -1, -1, -1, -1, -1},
    { 7, 11,  6, 11, 10,  6,  0,  8,  4, -1, -1, -1, -1, -1, -1, -1},
    { 7, 11,  6,  6, 11, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10,  3,  6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  4, 10,  3,  0, 10,  0,  6,  8,  0,  3,  6, -1, -1, -1, -1},
    {10,  3,  6,  9,  5,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 3,  5,  4, 10,  3,  4,  3,  9,  5,  8,  3,  6,  3,  8,  9, -1},
    { 3,  6,  4,  3,  4,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 3,  6,  8,  0,  3,  8,  1,  3,  0, -1, -1, -1, -1, -1, -1, -1},
    { 9,  6,  4,  0,  9,  4,  9,  3,  6,  1,  9,  5,  9,  1,  3, -1},
    { 1,  3,  6,  9,  1,  6,  8,  9,  6,  1,  9,  5, -1, -1, -1, -1},
    { 6, 10,  1,  5,  6,  1,  6, 11,  3,  6,  5, 11, -1, -1, -1, -1},
    { 8,  0,  6,  0,  5,  6,  5,  3,  6,  3,  5, 11,  1,  4, 10, -1},
    { 6,  9, 11,  3,  6, 11,  6,  0,  9,  1,  6, 10,  6,  1,  0, -1},
    {10,  1,  4, 11,  6,  8,  9, 11,  8,  3,  6, 11, -1, -1, -1, -1},
    { 5, 11,  3,  6,  5,  3,  4,  5,  6, -1, -1, -1, -1, -1, -1, -1},
    { 5, 11,  3,  5,  3,  6,  0,  5,  6,  8,  0,  6, -1, -1, -1, -1},
    { 6,  4,  0, 11,  6,  0,  9, 11,  0,  3,  6, 11, -1, -1, -1, -1},
    { 6,  8,  3,  8, 11,  3,  8,  9, 11, -1, -1, -1, -1, -1, -1, -1},
    {10,  3,  2, 10,  2,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  4, 10,  3,  0, 10,  2,  0,  3, -1, -1, -1, -1, -1, -1, -1},
    { 5,  3,  2,  9,  5,  2,  5, 10,  3,  8,  5,  0,  5,  8, 10, -1},
    { 3,  2, 10,  2,  5, 10,  5,  4, 10,  2,  9,  5, -1, -1, -1, -1},
    { 2,  8,  4,  1,  2,  4,  3,  2,  1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  3,  2,  0,  1,  3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  8,  5,  2,  9,  5,  1,  2,  1,  3,  2, -1, -1, -1, -1},
    { 5,  1,  9,  1,  2,  9,  1,  3,  2, -1, -1, -1, -1, -1, -1, -1},
    { 5,  8, 10,  1,  5, 10,  5,  2,  8,  3,  5, 11,  5,  3,  2, -1},
    { 1,  4, 10,  0, 11,  3,  2,  0,  3,  5, 11,  0, -1, -1, -1, -1},
    {10,  0,  8,  1,  0, 10,  3,  2,  9, 11,  3,  9, -1, -1, -1, -1},
    { 2,  9,  3,  9, 11,  3,  4, 10,  1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  5,  8,  5,  3,  8,  3,  2,  8,  3,  5, 11, -1, -1, -1, -1},
    {11,  3,  5,  3,  0,  5,  3,  2,  0, -1, -1, -1, -1, -1, -1, -1},
    {11,  3,  9,  3,  2,  9,  4,  0,  8, -1, -1, -1, -1, -1, -1, -1},
    { 2,  9,  3,  3,  9, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10,  3,  7,  9, 10,  7, 10,  2,  6, 10,  9,  2, -1, -1, -1, -1},
    {10,  3,  4,  3,  7,  4,  7,  0,  4,  0,  7,  9,  2,  6,  8, -1},
    {10,  0,  2,  6, 10,  2, 10,  5,  0,  7, 10,  3, 10,  7,  5, -1},
    { 6,  8,  2,  4,  3,  7,  5,  4,  7, 10,  3,  4, -1, -1, -1, -1},
    { 9,  1,  3,  7,  9,  3,  9,  4,  1,  6,  9,  2,  9,  6,  4, -1},
    { 2,  6,  8,  3,  9,  0,  1,  3,  0,  7,  9,  3, -1, -1, -1, -1},
    { 7,  5,  3,  5,  1,  3,  6,  0,  2,  6,  4,  0, -1, -1, -1, -1},
    { 5,  1,  7,  1,  3,  7,  8,  2,  6, -1, -1, -1, -1, -1, -1, -1},
    { 6, 10,  2, 10,  1,  2,  1,  9,  2,  9,  1,  5, 11,  3,  7, -1},
    { 2,  6,  8,  0,  5,  9,  1,  4, 10, 11,  3,  7, -1, -1, -1, -1},
    {11,  3,  7, 10,  2,  6, 10,  1,  2,  1,  0,  2, -1, -1, -1, -1},
    { 2,  6,  8,  1,  4, 10, 11,  3,  7, -1, -1, -1, -1, -1, -1, -1},
    { 7, 11,  3,  5,  2,  6,  4,  5,  6,  9,  2,  5, -1, -1, -1, -1},
    { 8,  2,  6, 11,  3,  7,  5,  9,  0, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  6,  0,  2,  6, 11,  3,  7, -1, -1, -1, -1, -1, -1, -1},
    { 6,  8,  2, 11,  3,  7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10,  3,  7,  9, 10,  7,  8, 10,  9, -1, -1, -1, -1, -1, -1, -1},
    { 3,  7, 10, 10,  7,  4,  7,  9,  4,  9,  0,  4, -1, -1, -1, -1},
    { 8, 10,  0, 10,  7,  0,  7,  5,  0,  7, 10,  3, -1, -1, -1, -1},
    { 3,  7, 10,  7,  4, 10,  7,  5,  4, -1, -1, -1, -1, -1, -1, -1},
    { 9,  8,  7,  8,  1,  7,  1,  3,  7,  8,  4,  1, -1, -1, -1, -1},
    { 9,  0,  7,  0,  3,  7,  0,  1,  3, -1, -1, -1, -1, -1, -1, -1},
    { 3,  7,  1,  7,  5,  1,  8,  4,  0, -1, -1, -1, -1, -1, -1, -1},
    { 3,  7,  1,  1,  7,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11,  3,  7, 10,  5,  9,  8, 10,  9,  1,  5, 10, -1, -1, -1, -1},
    {10,  1,  4,  9,  0,  5,  7, 11,  3, -1, -1, -1, -1, -1, -1, -1},
    { 0,  8,  1,  8, 10,  1,  7, 11,  3, -1, -1, -1, -1, -1, -1, -1},
    { 1,  4, 10,  7, 11,  3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  4,  9,  4,  5,  9,  3,  7, 11, -1, -1, -1, -1, -1, -1, -1},
    {11,  3,  7,  0,  5,  9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  8, 11,  3,  7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 7, 11,  3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11,  7,  3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  4,  8,  3, 11,  7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 3, 11,  5,  0,  3,  5,  3,  9,  7,  3,  0,  9, -1, -1, -1, -1},
    { 3,  8,  9,  7,  3,  9,  3,  4,  8,  5,  3, 11,  3,  5,  4, -1},
    { 4,  1, 11,  7,  4, 11,  4,  3, 10,  4,  7,  3, -1, -1, -1, -1},
    { 7,  0,  1, 11,  7,  1,  7,  8,  0, 10,  7,  3,  7, 10,  8, -1},
    { 0,  9,  4,  9,  7,  4,  7, 10,  4, 10,  7,  3, 11,  5,  1, -1},
    { 1, 11,  5,  3,  9,  7,  3, 10,  9, 10,  8,  9, -1, -1, -1, -1},
    { 7,  3,  1,  7,  1,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  3,  1,  4,  8,  1,  8,  7,  3,  5,  8,  0,  8,  5,  7, -1},
    { 0,  9,  7,  3,  0,  7,  1,  0,  3, -1, -1, -1, -1, -1, -1, -1},
    { 8,  9,  7,  1,  8,  7,  3,  1,  7,  4,  8,  1, -1, -1, -1, -1},
    { 7,  3, 10,  4,  7, 10,  5,  7,  4, -1, -1, -1, -1, -1, -1, -1},
    {10,  8,  0,  7, 10,  0,  5,  7,  0, 10,  7,  3, -1, -1, -1, -1},
    { 7,  3, 10,  7, 10,  4,  9,  7,  4,  0,  9,  4, -1, -1, -1, -1},
    { 3, 10,  7, 10,  9,  7, 10,  8,  9, -1, -1, -1, -1, -1, -1, -1},
    { 8,  6,  3, 11,  8,  3,  8,  7,  2,  8, 11,  7, -1, -1, -1, -1},
    {11,  4,  6,  3, 11,  6, 11,  0,  4,  2, 11,  7, 11,  2,  0, -1},
    { 3, 11,  6, 11,  5,  6,  5,  8,  6,  8,  5,  0,  9,  7,  2, -1},
    { 9,  7,  2, 11,  6,  3, 11,  5,  6,  5,  4,  6, -1, -1, -1, -1},
    { 4,  1,  8,  1, 11,  8, 11,  2,  8,  2, 11,  7,  3, 10,  6, -1},
    { 3, 10,  6,  1,  7,  2,  0,  1,  2, 11,  7,  1, -1, -1, -1, -1},
    { 5,  1, 11,  3, 10,  6,  4,  0,  8,  7,  2,  9, -1, -1, -1, -1},
    { 9,  7,  2, 10,  6,  3,  1, 11,  5, -1, -1, -1, -1, -1, -1, -1},
    { 8,  5,  7,  2,  8,  7,  8,  1,  5,  3,  8,  6,  8,  3,  1, -1},
    { 0,  7,  2,  5,  7,  0,  4,  6,  3,  1,  4,  3, -1, -1, -1, -1},
    { 7,  2,  9,  6,  0,  8,  6,  3,  0,  3,  1,  0, -1, -1, -1, -1},
    { 1,  4,  3,  4,  6,  3,  9,  7,  2, -1, -1, -1, -1, -1, -1, -1},
    {10,  6,  3,  8,  7,  2,  8,  4,  7,  4,  5,  7, -1, -1, -1, -1},
    { 0,  5,  2,  5,  7,  2, 10,  6,  3, -1, -1, -1, -1, -1, -1, -1},
    { 0,  8,  4,  3, 10,  6,  7,  2,  9, -1, -1, -1, -1, -1, -1, -1},
    { 3, 10,  6,  9,  7,  2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 9,  2,  3,  9,  3, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4, 11,  9,  0,  4,  9,  4,  3, 11,  2,  4,  8,  4,  2,  3, -1},
    { 3, 11,  5,  0,  3,  5,  2,  3,  0, -1, -1, -1, -1, -1, -1, -1},
    { 5,  4,  8,  3,  5,  8,  2,  3,  8,  5,  3, 11, -1, -1, -1, -1},
    { 4,  2,  3, 10,  4,  3,  4,  9,  2, 11,  4,  1,  4, 11,  9, -1},
    { 0,  1,  9,  1, 11,  9,  2, 10,  8,  2,  3, 10, -1, -1, -1, -1},
    { 5,  1, 11,  4,  3, 10,  4,  0,  3,  0,  2,  3, -1, -1, -1, -1},
    { 8,  2, 10,  2,  3, 10,  5,  1, 11, -1, -1, -1, -1, -1, -1, -1},
    { 1,  5,  9,  2,  1,  9,  3,  1,  2, -1, -1, -1, -1, -1, -1, -1},
    { 0,  5,  9,  1,  8,  2,  3,  1,  2,  4,  8,  1, -1, -1, -1, -1},
    { 3,  0,  2,  1,  0,  3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  2,  4,  2,  1,  4,  2,  3,  1, -1, -1, -1, -1, -1, -1, -1},
    { 2,  3, 10,  5,  2, 10,  4,  5, 10,  9,  2,  5, -1, -1, -1, -1},
    { 3, 10,  2, 10,  8,  2,  5,  9,  0, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0, 10,  0,  3, 10,  0,  2,  3, -1, -1, -1, -1, -1, -1, -1},
    { 3, 10,  2,  2, 10,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  6,  3, 11,  8,  3,  9,  8, 11, -1, -1, -1, -1, -1, -1, -1},
    { 4,  6,  0,  6, 11,  0, 11,  9,  0,  6,  3, 11, -1, -1, -1, -1},
    {11,  5,  3,  3,  5,  6,  5,  0,  6,  0,  8,  6, -1, -1, -1, -1},
    {11,  5,  3,  5,  6,  3,  5,  4,  6, -1, -1, -1, -1, -1, -1, -1},
    { 3, 10,  6,  1,  8,  4,  1, 11,  8, 11,  9,  8, -1, -1, -1, -1},
    { 9,  0, 11,  0,  1, 11,  6,  3, 10, -1, -1, -1, -1, -1, -1, -1},
    { 3, 10,  6,  0,  8,  4,  5,  1, 11, -1, -1, -1, -1, -1, -1, -1},
    {10,  6,  3,  5,  1, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 3,  1,  6,  1,  9,  6,  9,  8,  6,  9,  1,  5, -1, -1, -1, -1},
    { 6,  3,  4,  3,  1,  4,  9,  0,  5, -1, -1, -1, -1, -1, -1, -1},
    { 6,  3,  8,  3,  0,  8,  3,  1,  0, -1, -1, -1, -1, -1, -1, -1},
    { 6,  3,  4,  4,  3,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 5,  9,  4,  9,  8,  4,  3, 10,  6, -1, -1, -1, -1, -1, -1, -1},
    { 3, 10,  6,  5,  9,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  8,  3, 10,  6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 3, 10,  6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11,  7,  6, 11,  6, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  7,  6,  8,  0,  6,  0, 11,  7, 10,  0,  4,  0, 10, 11, -1},
    { 0, 10, 11,  5,  0, 11,  0,  6, 10,  7,  0,  9,  0,  7,  6, -1},
    {10, 11,  4, 11,  5,  4,  8,  7,  6,  8,  9,  7, -1, -1, -1, -1},
    { 4,  1, 11,  7,  4, 11,  6,  4,  7, -1, -1, -1, -1, -1, -1, -1},
    { 0,  1,  8,  1,  7,  8,  7,  6,  8,  1, 11,  7, -1, -1, -1, -1},
    {11,  5,  1,  9,  4,  0,  9,  7,  4,  7,  6,  4, -1, -1, -1, -1},
    { 6,  8,  7,  8,  9,  7,  1, 11,  5, -1, -1, -1, -1, -1, -1, -1},
    { 6, 10,  1,  5,  6,  1,  7,  6,  5, -1, -1, -1, -1, -1, -1, -1},
    { 1,  4, 10,  0,  6,  8,  0,  5,  6,  5,  7,  6, -1, -1, -1, -1},
    { 7,  6, 10,  0,  7, 10,  1,  0, 10,  7,  0,  9, -1, -1, -1, -1},
    { 9,  7,  8,  7,  6,  8,  1,  4, 10, -1, -1, -1, -1, -1, -1, -1},
    { 4,  7,  6,  5,  7,  4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  5,  8,  5,  6,  8,  5,  7,  6, -1, -1, -1, -1, -1, -1, -1},
    { 9,  7,  0,  7,  4,  0,  7,  6,  4, -1, -1, -1, -1, -1, -1, -1},
    { 9,  7,  8,  8,  7,  6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {11,  7,  2,  8, 11,  2, 10, 11,  8, -1, -1, -1, -1, -1, -1, -1},
    { 2,  0,  7,  0, 10,  7, 10, 11,  7, 10,  0,  4, -1, -1, -1, -1},
    { 9,  7,  2, 11,  0,  8, 10, 11,  8,  5,  0, 11, -1, -1, -1, -1},
    { 4, 10,  5, 10, 11,  5,  2,  9,  7, -1, -1, -1, -1, -1, -1, -1},
    { 1, 11,  4,  4, 11,  8, 11,  7,  8,  7,  2,  8, -1, -1, -1, -1},
    { 7,  2, 11,  2,  1, 11,  2,  0,  1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  8,  7,  2,  9, 11,  5,  1, -1, -1, -1, -1, -1, -1, -1},
    { 7,  2,  9,  1, 11,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 5,  7,  2, 10,  5,  2,  8, 10,  2,  1,  5, 10, -1, -1, -1, -1},
    { 7,  2,  5,  2,  0,  5, 10,  1,  4, -1, -1, -1, -1, -1, -1, -1},
    {10,  1,  8,  1,  0,  8,  7,  2,  9, -1, -1, -1, -1, -1, -1, -1},
    { 9,  7,  2,  1,  4, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  4,  2,  4,  7,  2,  4,  5,  7, -1, -1, -1, -1, -1, -1, -1},
    { 0,  5,  2,  2,  5,  7, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 9,  7,  2,  4,  0,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 9,  7,  2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 9,  2,  6, 10,  9,  6, 11,  9, 10, -1, -1, -1, -1, -1, -1, -1},
    { 8,  2,  6,  9,  4, 10, 11,  9, 10,  0,  4,  9, -1, -1, -1, -1},
    {10, 11,  6, 11,  0,  6,  0,  2,  6, 11,  5,  0, -1, -1, -1, -1},
    {11,  5, 10,  5,  4, 10,  2,  6,  8, -1, -1, -1, -1, -1, -1, -1},
    {11,  9,  2,  4, 11,  2,  6,  4,  2, 11,  4,  1, -1, -1, -1, -1},
    { 1, 11,  0, 11,  9,  0,  6,  8,  2, -1, -1, -1, -1, -1, -1, -1},
    { 2,  6,  0,  6,  4,  0, 11,  5,  1, -1, -1, -1, -1, -1, -1, -1},
    { 2,  6,  8, 11,  5,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 1,  5,  9,  1,  9,  2, 10,  1,  2,  6, 10,  2, -1, -1, -1, -1},
    { 6,  8,  2,  5,  9,  0,  1,  4, 10, -1, -1, -1, -1, -1, -1, -1},
    {10,  1,  6,  1,  2,  6,  1,  0,  2, -1, -1, -1, -1, -1, -1, -1},
    { 8,  2,  6,  1,  4, 10, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 2,  6,  9,  6,  5,  9,  6,  4,  5, -1, -1, -1, -1, -1, -1, -1},
    { 2,  6,  8,  5,  9,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  6,  6,  0,  2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 2,  6,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10,  9,  8, 10, 11,  9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4, 10,  0, 10,  9,  0, 10, 11,  9, -1, -1, -1, -1, -1, -1, -1},
    { 0,  8,  5,  8, 11,  5,  8, 10, 11, -1, -1, -1, -1, -1, -1, -1},
    { 4, 10,  5,  5, 10, 11, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 1, 11,  4, 11,  8,  4, 11,  9,  8, -1, -1, -1, -1, -1, -1, -1},
    { 9,  0, 11, 11,  0,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  8,  4, 11,  5,  1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 1, 11,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 5,  9,  1,  9, 10,  1,  9,  8, 10, -1, -1, -1, -1, -1, -1, -1},
    { 5,  9,  0, 10,  1,  4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10,  1,  8,  8,  1,  0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {10,  1,  4, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 8,  4,  9,  9,  4,  5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 0,  5,  9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    { 4,  0,  8, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
    {-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1},
};

} // namespace detail

/// Extracts the iso-level surface of a volume as a triangle mesh, treating
/// values <= iso as inside. Lattice points are voxel centers in world
/// coordinates; crossings are placed by exact linear inversion along cell
/// edges, and vertices are welded by global edge identity so the result is
/// watertight wherever the surface does not touch the grid boundary.
/// Triangles wind so face normals point out of the inside region.
inline TriMesh extract_isosurface(const Volume& vol, double iso) {
    vol.validate();
    if (vol.dims[0] < 2 || vol.dims[1] < 2 || vol.dims[2] < 2)
        throw ValidationError("extract_isosurface: need at least 2 voxels per axis");

    const std::uint32_t nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
    const std::uint64_t nvox = std::uint64_t(nx) * ny * nz;

    TriMesh mesh;
    // Global edge id -> welded vertex index. An edge is named by its axis and
    // the linear index of its lower lattice point.
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    edge_vertex.reserve(1024);

    auto corner_coord = [](int c) {
        return std::array<std::uint32_t, 3>{std::uint32_t(c & 1), std::uint32_t((c >> 1) & 1),
                                            std::uint32_t((c >> 2) & 1)};
    };

    double v[8];
    for (std::uint32_t k = 0; k + 1 < nz; ++k)
        for (std::uint32_t j = 0; j + 1 < ny; ++j)
            for (std::uint32_t i = 0; i + 1 < nx; ++i) {
                int config = 0;
                for (int c = 0; c < 8; ++c) {
                    auto d = corner_coord(c);
                    v[c] = vol.at(i + d[0], j + d[1], k + d[2]);
                    if (v[c] <= iso) config |= 1 << c;
                }
                const int* row = detail::kMcTriTable[config];
                if (row[0] < 0) continue;

                for (int t = 0; row[t] >= 0; t += 3) {
                    std::uint32_t tri[3];
                    for (int s = 0; s < 3; ++s) {
                        int e = row[t + s];
                        int c0 = detail::kMcEdgeCorners[e][0], c1 = detail::kMcEdgeCorners[e][1];
                        auto d0 = corner_coord(c0);
                        std::uint64_t lower = (i + d0[0]) +
                                              std::uint64_t(nx) * ((j + d0[1]) + std::uint64_t(ny) * (k + d0[2]));
                        std::uint64_t key = std::uint64_t(e >> 2) * nvox + lower;
                        auto it = edge_vertex.find(key);
                        if (it == edge_vertex.end()) {
                            auto d1 = corner_coord(c1);
                            Vec3 p0 = vol.voxel_center(i + d0[0], j + d0[1], k + d0[2]);
                            Vec3 p1 = vol.voxel_center(i + d1[0], j + d1[1], k + d1[2]);
                            // One endpoint is <= iso and the other is > iso,
                            // so the denominator cannot vanish.
                            double tt = (iso - v[c0]) / (v[c1] - v[c0]);
                            Vec3 p = p0 + (p1 - p0) * tt;
                            it = edge_vertex.emplace(key, std::uint32_t(mesh.vertices.size())).first;
                            mesh.vertices.push_back(p);
                        }
                        tri[s] = it->second;
                    }
                    mesh.faces.push_back({tri[0], tri[1], tri[2]});
                }
            }
    return mesh;
}

} // namespace shapeforge
