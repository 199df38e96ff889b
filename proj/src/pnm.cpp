#include "cardiomix/pnm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "cardiomix/errors.hpp"

namespace cardiomix {

namespace {

struct ByteReader {
    std::vector<unsigned char> bytes;
    std::size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    int peek() const { return eof() ? -1 : bytes[pos]; }
    int get() { return eof() ? -1 : bytes[pos++]; }
};

ByteReader read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path + "'");
    ByteReader r;
    r.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

bool is_space(int c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

// Netpbm headers allow '#' comments running to end of line.
void skip_separators(ByteReader& r) {
    for (;;) {
        while (is_space(r.peek())) r.get();
        if (r.peek() == '#') {
            while (!r.eof() && r.get() != '\n') {
            }
            continue;
        }
        return;
    }
}

int parse_header_int(ByteReader& r, const std::string& path, const char* what) {
    skip_separators(r);
    const std::size_t start = r.pos;
    long long value = 0;
    bool any = false;
    while (r.peek() >= '0' && r.peek() <= '9') {
        value = value * 10 + (r.get() - '0');
        any = true;
        if (value > 1'000'000'000) break;
    }
    if (!any)
        throw ParseError("'" + path + "': expected " + std::string(what) +
                         " at byte offset " + std::to_string(start));
    return static_cast<int>(value);
}

unsigned char quantize(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::llround(c * 255.0));
}

}  // namespace

Image load_pgm(const std::string& path) {
    ByteReader r = read_file(path);
    if (r.bytes.size() < 2 || r.bytes[0] != 'P')
        throw ParseError("'" + path + "': bad magic at byte offset 0");
    const char kind = static_cast<char>(r.bytes[1]);
    if (kind != '5' && kind != '2')
        throw ParseError("'" + path + "': magic 'P" + std::string(1, kind) +
                         "' at byte offset 0 is not a graymap (want P5 or P2)");
    r.pos = 2;

    const int width = parse_header_int(r, path, "width");
    const int height = parse_header_int(r, path, "height");
    const int maxval = parse_header_int(r, path, "maxval");
    if (width <= 0 || height <= 0)
        throw ParseError("'" + path + "': nonpositive dimensions in header");
    if (maxval <= 0 || maxval > 255)
        throw ParseError("'" + path + "': maxval " + std::to_string(maxval) +
                         " outside supported range [1,255]");

    const std::size_t count = static_cast<std::size_t>(width) * height;
    std::vector<double> data(count);

    if (kind == '5') {
        if (r.eof() || !is_space(r.peek()))
            throw ParseError("'" + path + "': expected whitespace after maxval at byte offset " +
                             std::to_string(r.pos));
        r.get();  // exactly one separator byte before the payload
        if (r.bytes.size() - r.pos < count)
            throw IntegrityError("'" + path + "': truncated payload, expected " +
                                 std::to_string(count) + " bytes, got " +
                                 std::to_string(r.bytes.size() - r.pos));
        for (std::size_t i = 0; i < count; ++i) {
            const int p = r.get();
            if (p > maxval)
                throw ParseError("'" + path + "': pixel value " + std::to_string(p) +
                                 " exceeds maxval at byte offset " + std::to_string(r.pos - 1));
            data[i] = static_cast<double>(p) / maxval;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            skip_separators(r);
            if (r.eof())
                throw IntegrityError("'" + path + "': truncated payload, expected " +
                                     std::to_string(count) + " samples, got " +
                                     std::to_string(i));
            const int p = parse_header_int(r, path, "pixel value");
            if (p > maxval)
                throw ParseError("'" + path + "': pixel value " + std::to_string(p) +
                                 " exceeds maxval at byte offset " + std::to_string(r.pos));
            data[i] = static_cast<double>(p) / maxval;
        }
    }
    return Image(height, width, 1, std::move(data));
}

namespace {

void save_pnm(const Image& img, const std::string& path, const char* magic) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << magic << "\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> payload(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) payload[i] = quantize(img.data()[i]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw UsageError("write failed for '" + path + "'");
}

}  // namespace

void save_pgm(const Image& img, const std::string& path) {
    if (img.channels() != 1)
        throw UsageError("save_pgm expects 1 channel, got " + std::to_string(img.channels()));
    save_pnm(img, path, "P5");
}

void save_ppm(const Image& rgb, const std::string& path) {
    if (rgb.channels() != 3)
        throw UsageError("save_ppm expects 3 channels, got " + std::to_string(rgb.channels()));
    save_pnm(rgb, path, "P6");
}

}  // namespace cardiomix
