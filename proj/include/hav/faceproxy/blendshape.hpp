#pragma once

#include "hav/geometry.hpp"

#include <string>
#include <vector>

namespace hav::faceproxy {

// Linear blendshape head proxy. Deformed meshes stay inside the canonical
// box [-1,1]^3 for any coefficient vector with sup norm <= 1.
struct BlendshapeModel {
  Mesh base;
  std::vector<VertexMatrix> deltas; // K entries, each V x 3

  int K() const { return int(deltas.size()); }
};

// Procedural head: subdivided icosphere with a protruding nose box, lobed
// radial deformation basis, and a smooth per-vertex albedo pattern.
BlendshapeModel make_head_model(int K);

// Static torso box below the head.
Mesh make_torso_mesh();

Mesh deform_mesh(const BlendshapeModel& model, const Eigen::VectorXd& delta);
Mesh apply_pose(const Mesh& mesh, const HeadPose& pose);

// Area-weighted vertex normals; vertices with no incident area get the zero
// vector.
VertexMatrix vertex_normals(const Mesh& mesh);

// Versioned binary io, magic FPXY1.
void save_model(const std::string& path, const BlendshapeModel& model);
BlendshapeModel load_model(const std::string& path);

} // namespace hav::faceproxy
