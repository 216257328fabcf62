#pragma once

#include "hav/faceproxy/blendshape.hpp"
#include "hav/image.hpp"

namespace hav::faceproxy {

struct ShadingParams {
  Vec3 light_dir = Vec3(0.35, 0.45, 0.82).normalized(); // toward the light
  double ambient = 0.35;
  double diffuse = 0.65;
  double background = 0.5;
};

// Perspective z-buffer rasterizer with Gouraud shading; shared by the
// ground-truth generator only (the condition renderer has its own
// orthographic path).
void render_scene(const std::vector<const Mesh*>& meshes, const Camera& cam,
                  const ShadingParams& shading, Image& rgb, Image& mask);

} // namespace hav::faceproxy
