#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cardiomix {

/// Integer pixel rectangle, half-open: [x0,x1) x [y0,y1).
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long area() const {
        return empty() ? 0 : static_cast<long long>(width()) * height();
    }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    bool contains(int x, int y) const {
        return x >= x0 && x < x1 && y >= y0 && y < y1;
    }
    bool inside(int image_width, int image_height) const {
        return x0 >= 0 && y0 >= 0 && x1 <= image_width && y1 <= image_height;
    }
    bool operator==(const Rect&) const = default;
};

/// Row-major grid of unit-interval intensities; channel-interleaved when
/// channels > 1. Immutable after construction: every image goes through the
/// validating constructor, so values are always in [0,1].
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, std::vector<double> data);

    static Image constant(int height, int width, int channels, double value);
    static Image zeros(int height, int width, int channels = 1);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }

    double at(int y, int x, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    const std::vector<double>& data() const { return data_; }

    bool same_dims(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_ &&
               channels_ == other.channels_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Probability vector over classes; entries nonnegative, summing to 1
/// (within 1e-9). One-hot labels are the special case.
class SoftLabel {
public:
    SoftLabel() = default;
    explicit SoftLabel(std::vector<double> probs);

    static SoftLabel one_hot(int k, int num_classes);

    const std::vector<double>& probs() const { return probs_; }
    int num_classes() const { return static_cast<int>(probs_.size()); }
    double operator[](int k) const { return probs_[k]; }

    /// Index of the largest entry; ties resolve to the lowest index.
    int argmax() const;

private:
    std::vector<double> probs_;
};

/// Convex combination lam*a + (1-lam)*b of two labels.
SoftLabel mix_labels(const SoftLabel& a, const SoftLabel& b, double lam);

struct Example {
    std::string id;
    Image image;
    SoftLabel label;
    std::optional<Rect> lesion_box;  // ground truth, synthetic data only
};

/// Ordered collection of examples with shared class names. Image dimensions
/// may vary until preprocessing; training and evaluation require uniformity
/// and check it via uniform_dims().
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Example> examples, std::vector<std::string> class_names);

    const std::vector<Example>& examples() const { return examples_; }
    const std::vector<std::string>& class_names() const { return class_names_; }
    std::size_t size() const { return examples_.size(); }
    int num_classes() const { return static_cast<int>(class_names_.size()); }
    bool uniform_dims() const;

private:
    std::vector<Example> examples_;
    std::vector<std::string> class_names_;
};

}  // namespace cardiomix
