#include "dehaze/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

namespace dehaze::io {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext;
}

fs::path temp_sibling(const fs::path& path) {
    return path.parent_path() / (".tmp-" + path.stem().string() + path.extension().string());
}

void commit(const fs::path& tmp, const fs::path& path) {
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move temporary file into place: " + path.string());
    }
}

}  // namespace

bool is_lossless_raster(const fs::path& path) {
    const std::string ext = lower_ext(path);
    return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm" ||
           ext == ".bmp";
}

Image read_image(const fs::path& path) {
    if (!is_lossless_raster(path)) throw IoError("not a lossless raster format: " + path.string());
    if (!fs::exists(path)) throw IoError("no such file: " + path.string());
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("cannot decode image: " + path.string());

    double scale;
    switch (mat.depth()) {
        case CV_8U: scale = 255.0; break;
        case CV_16U: scale = kMax16; break;
        default: throw IoError("unsupported sample type (need 8 or 16 bit): " + path.string());
    }
    const int src_c = mat.channels();
    if (src_c != 1 && src_c != 3 && src_c != 4) throw IoError("unsupported channel count: " + path.string());
    const std::size_t c = src_c == 1 ? 1 : 3;
    const auto h = static_cast<std::size_t>(mat.rows), w = static_cast<std::size_t>(mat.cols);
    std::vector<double> data(h * w * c);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t k = 0; k < c; ++k) {
                // OpenCV stores color as BGR(A).
                const int src_k = c == 1 ? 0 : static_cast<int>(2 - k);
                double raw;
                if (mat.depth() == CV_8U) {
                    raw = mat.ptr<std::uint8_t>(static_cast<int>(y))[x * src_c + src_k];
                } else {
                    raw = mat.ptr<std::uint16_t>(static_cast<int>(y))[x * src_c + src_k];
                }
                data[(y * w + x) * c + k] = raw / scale;
            }
        }
    }
    return Image(h, w, c, std::move(data));
}

unsigned quantize16(double v) { return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * kMax16)); }

void write_image(const fs::path& path, const Image& img, int bit_depth) {
    if (!is_lossless_raster(path)) throw IoError("refusing to write a lossy or unknown format: " + path.string());
    if (bit_depth != 8 && bit_depth != 16) throw IoError("bit depth must be 8 or 16");
    if (img.empty()) throw IoError("refusing to write an empty image: " + path.string());
    const int c = static_cast<int>(img.channels());
    const int type = bit_depth == 8 ? CV_MAKETYPE(CV_8U, c) : CV_MAKETYPE(CV_16U, c);
    cv::Mat mat(static_cast<int>(img.height()), static_cast<int>(img.width()), type);
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            for (std::size_t k = 0; k < img.channels(); ++k) {
                const std::size_t dst_k = c == 1 ? 0 : 2 - k;
                const double v = img.at(y, x, k);
                if (bit_depth == 8) {
                    mat.ptr<std::uint8_t>(static_cast<int>(y))[x * c + dst_k] =
                        static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                } else {
                    mat.ptr<std::uint16_t>(static_cast<int>(y))[x * c + dst_k] =
                        static_cast<std::uint16_t>(quantize16(v));
                }
            }
        }
    }
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    const fs::path tmp = temp_sibling(path);
    if (!cv::imwrite(tmp.string(), mat)) throw IoError("cannot write image: " + path.string());
    commit(tmp, path);
}

Grid read_grid(const fs::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".txt" || ext == ".dat" || ext == ".csv") {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open grid: " + path.string());
        Grid g;
        std::string line;
        while (std::getline(in, line)) {
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream row(line);
            std::vector<double> values;
            double v;
            while (row >> v) values.push_back(v);
            if (!row.eof()) throw IoError("malformed number in grid: " + path.string());
            if (values.empty()) continue;
            if (g.width == 0) g.width = values.size();
            if (values.size() != g.width) throw IoError("ragged grid rows in: " + path.string());
            g.data.insert(g.data.end(), values.begin(), values.end());
            ++g.height;
        }
        if (g.data.empty()) throw IoError("empty grid: " + path.string());
        return g;
    }
    const Image img = read_image(path);
    if (img.channels() != 1) throw IoError("depth raster must be single-channel: " + path.string());
    Grid g(img.height(), img.width());
    g.data = img.data();
    return g;
}

Image quantized16(const Image& img) {
    std::vector<double> v(img.data().size());
    std::transform(img.data().begin(), img.data().end(), v.begin(),
                   [](double x) { return dequantize16(quantize16(x)); });
    return Image(img.height(), img.width(), img.channels(), std::move(v));
}

TransmissionMap quantized16(const TransmissionMap& tr) {
    TransmissionMap out(tr.height, tr.width);
    std::transform(tr.data.begin(), tr.data.end(), out.data.begin(),
                   [](double x) { return dequantize16(quantize16(x)); });
    return out;
}

void write_bytes_atomic(const fs::path& path, const std::string& bytes) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    const fs::path tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    commit(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& contents) { write_bytes_atomic(path, contents); }

}  // namespace dehaze::io
