#pragma once

#include <string>
#include <vector>

#include "sceneflow/geometry.hpp"
#include "sceneflow/synthetic.hpp"

namespace sceneflow {

// Scene pair files are binary and fixed little-endian:
//   magic "SFPC", u32 version=1, u32 N, u32 M,
//   u32 flags (bit0: ground-truth flow present, bit1: visibility mask present),
//   f32 P[N*3], f32 Q[M*3], optional f32 S_GT[N*3], optional u8 occ[N].
// Read errors report the byte offset of the problem.
void write_scene(const std::string& path, const ScenePair& pair);
ScenePair read_scene(const std::string& path);

// Flow files: magic "SFLW", u32 version=1, u32 N, f32 S[N*3].
void write_flow(const std::string& path, const std::vector<Vec3>& flow);
std::vector<Vec3> read_flow(const std::string& path);

}  // namespace sceneflow
