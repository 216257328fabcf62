#pragma once

#include "hav/faceproxy/blendshape.hpp"
#include "hav/image.hpp"

#include <string>

namespace hav::orthorender {

using faceproxy::BlendshapeModel;

// Canonical orthographic views. Fixed convention, all sharing the bounds
// [-1,1]^2 mapped onto an R x R image with top-left pixel centers and row 0
// at y=+1:
//   front: looks along -z, columns follow +x, depth test keeps max z
//   left:  looks along +x, columns follow +z, keeps min x
//   right: looks along -x, columns follow -z, keeps max x
// The front grid is therefore pixel-aligned with plane coordinates (x,y)
// and the left grid with (z,y); the right view mirrors in z.
enum class OrthoView { Front, Left, Right };

struct ViewMaps {
  Image normal;  // (n+1)/2 in [0,1], canonical-space normals
  Image texture; // per-vertex albedo
  Image mask;    // binary coverage
};

struct RenderingSet {
  int res = 0;
  ViewMaps front, left, right;

  const ViewMaps& view(OrthoView v) const {
    return v == OrthoView::Front ? front : v == OrthoView::Left ? left : right;
  }
};

enum class RenderMode { ZeroPosed, Posed };

ViewMaps rasterize_ortho(const Mesh& mesh, OrthoView view, int res);

// Condition maps of the deformed model: zero-posed by default, posed as the
// ablation path. texture_channel=false zeroes the texture maps.
RenderingSet render_condition_set(const BlendshapeModel& model,
                                  const Eigen::VectorXd& delta,
                                  const HeadPose& pose, RenderMode mode,
                                  int res, bool texture_channel = true);

// Channel stack for the generators: normal(3), texture(3), mask(1).
std::vector<double> stack_channels(const ViewMaps& maps);
// Same, with columns mirrored (aligns the right view with (z,y)).
std::vector<double> stack_channels_flipped(const ViewMaps& maps);

// Debug dump: normal/texture/mask PNG triplets per view.
void dump_rendering_set(const RenderingSet& set, const std::string& dir);

} // namespace hav::orthorender
