#include "cardiomix/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cardiomix/errors.hpp"
#include "cardiomix/pnm.hpp"

namespace cardiomix {

namespace {

std::string strip_cr(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

}  // namespace

std::vector<std::string> default_class_names(int num_classes) {
    if (num_classes == 2) return {"HC", "MCD"};
    std::vector<std::string> names;
    names.reserve(num_classes);
    for (int k = 0; k < num_classes; ++k) names.push_back("class" + std::to_string(k));
    return names;
}

Dataset load_manifest(const std::string& path, int num_classes) {
    if (num_classes < 2) throw UsageError("manifest needs at least 2 classes");
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open manifest '" + path + "'");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "path,label")
        throw ParseError("'" + path + "' line 1: expected header \"path,label\"");

    std::vector<Example> examples;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::size_t comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0)
            throw ParseError("'" + path + "' line " + std::to_string(line_no) +
                             ": expected \"<image-path>,<class-index>\"");
        const std::string img_rel = line.substr(0, comma);
        const std::string label_str = line.substr(comma + 1);

        int label = -1;
        try {
            std::size_t used = 0;
            label = std::stoi(label_str, &used);
            if (used != label_str.size()) label = -1;
        } catch (const std::exception&) {
            label = -1;
        }
        if (label < 0 || label >= num_classes)
            throw UsageError("'" + path + "' line " + std::to_string(line_no) +
                             ": class index '" + label_str + "' out of range [0," +
                             std::to_string(num_classes) + ")");

        const std::filesystem::path img_path =
            std::filesystem::path(img_rel).is_absolute() ? std::filesystem::path(img_rel)
                                                         : base / img_rel;
        Image img;
        try {
            img = load_pgm(img_path.string());
        } catch (const UsageError& e) {
            throw UsageError("'" + path + "' line " + std::to_string(line_no) + ": " + e.what());
        }
        examples.push_back(
            {img_rel, std::move(img), SoftLabel::one_hot(label, num_classes), std::nullopt});
    }
    if (examples.empty()) throw UsageError("'" + path + "': empty dataset");
    return Dataset(std::move(examples), default_class_names(num_classes));
}

}  // namespace cardiomix
