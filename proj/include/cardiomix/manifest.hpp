#pragma once

#include <string>
#include <vector>

#include "cardiomix/image.hpp"

namespace cardiomix {

/// Class names used when a manifest does not carry any: binary datasets are
/// healthy-control vs myocarditis by convention (0 = HC, 1 = MCD).
std::vector<std::string> default_class_names(int num_classes);

/// Loads a two-column CSV manifest: header line `path,label`, then one
/// `<image-path>,<class-index>` record per line. Image paths are resolved
/// relative to the manifest's directory; labels become one-hot. Order is
/// preserved and example ids are the paths as written.
Dataset load_manifest(const std::string& path, int num_classes = 2);

}  // namespace cardiomix
