#pragma once

#include "optiview/scene.hpp"

namespace optiview::scene {

// Noiseless depth image. A pixel's ray passes through its integer (u, v)
// coordinate; depth is the distance along the optical axis (-z), so
// back-projection is (d*(u-cx)/fx, d*(v-cy)/fy, -d).
std::vector<float> render_depth(const SceneSpec& scene, const Pose& camera,
                                const CameraIntrinsics& intr);

// Occlusion-aware target mask: 1 where the nearest surface belongs to the
// target object.
std::vector<std::uint8_t> render_mask(const SceneSpec& scene, const Pose& camera,
                                      const CameraIntrinsics& intr);

// Back-project masked pixels with valid depth into the camera frame.
std::vector<Vec3> depth_to_pointcloud(const std::vector<float>& depth,
                                      const std::vector<std::uint8_t>& mask,
                                      const CameraIntrinsics& intr);

// Full sensor model: one render pass, Gaussian depth noise
// (scene.depth_noise_sigma) and Bernoulli pixel dropout (scene.dropout_rate)
// on masked pixels, then back-projection. Throws EmptyObservation if no
// target pixel survives.
Observation observe(const SceneSpec& scene, const Pose& camera,
                    const CameraIntrinsics& intr, RngStream& rng);

}  // namespace optiview::scene
