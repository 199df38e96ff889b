#include "cardiomix/image.hpp"

#include <cmath>

#include "cardiomix/errors.hpp"

namespace cardiomix {

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height_ <= 0 || width_ <= 0 || channels_ <= 0)
        throw UsageError("image dimensions must be positive");
    const std::size_t expected = static_cast<std::size_t>(height_) * width_ * channels_;
    if (data_.size() != expected)
        throw UsageError("image data length " + std::to_string(data_.size()) +
                         " does not match dimensions (expected " +
                         std::to_string(expected) + ")");
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0))
            throw UsageError("image value " + std::to_string(v) + " outside [0,1]");
    }
}

Image Image::constant(int height, int width, int channels, double value) {
    return Image(height, width, channels,
                 std::vector<double>(static_cast<std::size_t>(height) * width * channels, value));
}

Image Image::zeros(int height, int width, int channels) {
    return constant(height, width, channels, 0.0);
}

SoftLabel::SoftLabel(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw UsageError("label must have at least one class");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0)) throw UsageError("label entry " + std::to_string(p) + " is negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw UsageError("label entries sum to " + std::to_string(sum) + ", expected 1");
}

SoftLabel SoftLabel::one_hot(int k, int num_classes) {
    if (k < 0 || k >= num_classes) throw UsageError("one_hot: class index out of range");
    std::vector<double> p(num_classes, 0.0);
    p[k] = 1.0;
    return SoftLabel(std::move(p));
}

int SoftLabel::argmax() const {
    int best = 0;
    for (int k = 1; k < num_classes(); ++k)
        if (probs_[k] > probs_[best]) best = k;
    return best;
}

SoftLabel mix_labels(const SoftLabel& a, const SoftLabel& b, double lam) {
    if (a.num_classes() != b.num_classes())
        throw UsageError("mix_labels: class count mismatch");
    std::vector<double> p(a.num_classes());
    for (int k = 0; k < a.num_classes(); ++k)
        p[k] = lam * a[k] + (1.0 - lam) * b[k];
    return SoftLabel(std::move(p));
}

Dataset::Dataset(std::vector<Example> examples, std::vector<std::string> class_names)
    : examples_(std::move(examples)), class_names_(std::move(class_names)) {
    if (class_names_.empty()) throw UsageError("dataset needs at least one class name");
    for (const Example& ex : examples_) {
        if (ex.label.num_classes() != num_classes())
            throw UsageError("example '" + ex.id + "' label dimension " +
                             std::to_string(ex.label.num_classes()) +
                             " != class count " + std::to_string(num_classes()));
        if (ex.lesion_box && !ex.lesion_box->inside(ex.image.width(), ex.image.height()))
            throw UsageError("example '" + ex.id + "' lesion box outside image bounds");
    }
}

bool Dataset::uniform_dims() const {
    for (const Example& ex : examples_)
        if (!ex.image.same_dims(examples_.front().image)) return false;
    return true;
}

}  // namespace cardiomix
