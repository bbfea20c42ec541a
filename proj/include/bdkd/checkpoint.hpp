#ifndef BDKD_CHECKPOINT_HPP
#define BDKD_CHECKPOINT_HPP

#include <string>

#include "bdkd/model.hpp"

namespace bdkd {

/// Binary model snapshot: magic "BDKD", format version, a text manifest with
/// the input shape and layer list, then every named parameter (batchnorm
/// running statistics included) as raw little-endian f32.
void save_checkpoint(const Model& model, const std::string& path);

/// Rebuilds a model (in eval mode) from a checkpoint written by
/// save_checkpoint. Unknown versions and malformed files are contract errors
/// naming the problem.
Model load_checkpoint(const std::string& path);

} // namespace bdkd

#endif
