#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lfd/geometry.hpp"
#include "lfd/image.hpp"

namespace lfd {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-pixel depth raster; 0 marks invalid.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    DepthMap() = default;
    DepthMap(int w, int h, float fill = 0.f) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct MultiViewSet {
    std::vector<PinholeCamera> cameras;
    std::vector<ImageBuffer> images;  // channel meaning set by the loader (RGB in [0,1])
    DepthRange range;

    int num_views() const { return static_cast<int>(cameras.size()); }
    int width() const { return images.empty() ? 0 : images[0].width; }
    int height() const { return images.empty() ? 0 : images[0].height; }
};

struct DatasetDescriptor {
    std::vector<std::string> image_paths;
    std::vector<PinholeCamera> cameras;
    DepthRange range;
    // Rectified shorthand, if the manifest used it (0 otherwise).
    double focal = 0;
    double baseline = 0;
    std::vector<std::string> gt_paths;         // empty string = none for that view
    std::string gt_type;                       // "depth" or "disparity"
    std::vector<std::string> mask_nocc_paths;  // optional
};

// ---------------------------------------------------------------- PFM ------

// Grayscale PFM ("Pf"); the scale sign encodes endianness per the Middlebury
// convention. Written files are native-endian.
inline void write_pfm(const DepthMap& map, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    const bool little = (std::endian::native == std::endian::little);
    f << "Pf\n" << map.width << " " << map.height << "\n" << (little ? "-1.0" : "1.0") << "\n";
    // PFM rows are stored bottom-up.
    for (int y = map.height - 1; y >= 0; --y)
        f.write(reinterpret_cast<const char*>(map.data.data() + static_cast<std::size_t>(y) * map.width),
                static_cast<std::streamsize>(map.width * sizeof(float)));
    if (!f) throw IoError("write failed: " + path);
}

inline DepthMap read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic == "PF") throw ParseError("expected grayscale Pf, got color PF: " + path);
    if (magic != "Pf") throw ParseError("not a PFM file: " + path);
    int w = 0, h = 0;
    double scale = 0;
    f >> w >> h >> scale;
    if (!f || w <= 0 || h <= 0 || scale == 0) throw ParseError("malformed PFM header: " + path);
    f.get();  // single whitespace after the header
    DepthMap map(w, h);
    std::vector<float> row(w);
    const bool file_little = scale < 0;
    const bool native_little = (std::endian::native == std::endian::little);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w * sizeof(float)));
        if (!f) throw ParseError("truncated PFM data: " + path);
        if (file_little != native_little) {
            for (float& v : row) {
                std::uint32_t u;
                std::memcpy(&u, &v, 4);
                u = ((u & 0x000000FFu) << 24) | ((u & 0x0000FF00u) << 8) | ((u & 0x00FF0000u) >> 8) | ((u & 0xFF000000u) >> 24);
                std::memcpy(&v, &u, 4);
            }
        }
        std::memcpy(map.data.data() + static_cast<std::size_t>(y) * w, row.data(), w * sizeof(float));
    }
    for (float v : map.data)
        if (!std::isfinite(v)) throw ParseError("non-finite value in PFM: " + path);
    return map;
}

// ---------------------------------------------------------------- PNG ------

// Inverse depth mapped linearly to 8-bit gray, near = bright; invalid = 0.
inline void write_depth_png(const DepthMap& map, const DepthRange& range, const std::string& path) {
    range.validate();
    cv::Mat img(map.height, map.width, CV_8UC1);
    const double inv_lo = 1.0 / range.d_max;
    const double inv_hi = 1.0 / range.d_min;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const float d = map.at(x, y);
            if (d <= 0) {
                img.at<std::uint8_t>(y, x) = 0;
                continue;
            }
            double t = (1.0 / d - inv_lo) / (inv_hi - inv_lo);
            t = std::clamp(t, 0.0, 1.0);
            img.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(t * 255.0));
        }
    }
    if (!cv::imwrite(path, img)) throw IoError("cannot write PNG: " + path);
}

inline ImageBuffer read_image(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw IoError("cannot read image: " + path);
    ImageBuffer out(img.cols, img.rows);
    for (int y = 0; y < img.rows; ++y) {
        for (int x = 0; x < img.cols; ++x) {
            const cv::Vec3b bgr = img.at<cv::Vec3b>(y, x);
            out.set(x, y, Color{bgr[2] / 255.f, bgr[1] / 255.f, bgr[0] / 255.f});
        }
    }
    return out;
}

inline void write_image_png(const ImageBuffer& img, const std::string& path) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Color c = img.at(x, y);
            m.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<std::uint8_t>(std::lround(std::clamp(c[2], 0.f, 1.f) * 255.f)),
                                              static_cast<std::uint8_t>(std::lround(std::clamp(c[1], 0.f, 1.f) * 255.f)),
                                              static_cast<std::uint8_t>(std::lround(std::clamp(c[0], 0.f, 1.f) * 255.f)));
        }
    }
    if (!cv::imwrite(path, m)) throw IoError("cannot write PNG: " + path);
}

// 16-bit single-channel PNG for superpixel label maps (<= 65535 labels).
inline void write_label_png(const std::vector<std::int32_t>& labels, int width, int height,
                            const std::string& path) {
    cv::Mat m(height, width, CV_16UC1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::int32_t l = labels[static_cast<std::size_t>(y) * width + x];
            if (l < 0 || l > 65535) throw InvariantError("label out of 16-bit range");
            m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(l);
        }
    if (!cv::imwrite(path, m)) throw IoError("cannot write PNG: " + path);
}

inline std::vector<std::int32_t> read_label_png(const std::string& path, int& width, int& height) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw IoError("cannot read PNG: " + path);
    if (m.type() != CV_16UC1) throw ParseError("label PNG must be 16-bit single channel: " + path);
    width = m.cols;
    height = m.rows;
    std::vector<std::int32_t> labels(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) labels[static_cast<std::size_t>(y) * width + x] = m.at<std::uint16_t>(y, x);
    return labels;
}

// ------------------------------------------------------------ manifest -----

// Flat key=value manifest. Two calibration styles:
//   rectified: focal, baseline, cx, cy, disp_min, disp_max (x-translated rig)
//   general:   K<i> (9 numbers), R<i> (9), t<i> (3) per view + depth_min/max
// Per view: image<i>=path, optional gt<i>=path (+ gt_type), mask_nocc<i>.
namespace detail {

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

inline std::vector<double> parse_numbers(const std::string& s, std::size_t expect, const std::string& what) {
    std::istringstream is(s);
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    if (out.size() != expect) throw ParseError("expected " + std::to_string(expect) + " numbers for " + what);
    return out;
}

}  // namespace detail

inline DatasetDescriptor load_manifest(const std::string& manifest_path) {
    auto kv = detail::parse_kv_file(manifest_path);
    auto get = [&](const std::string& k) -> std::optional<std::string> {
        auto it = kv.find(k);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    auto require = [&](const std::string& k) {
        auto v = get(k);
        if (!v) throw ParseError("manifest missing key: " + k);
        return *v;
    };

    DatasetDescriptor ds;
    const int n_views = std::stoi(require("views"));
    if (n_views < 2) throw InvariantError("dataset needs at least 2 views");

    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) { return (base / p).string(); };

    const bool rectified = kv.count("focal") > 0;
    if (rectified) {
        ds.focal = std::stod(require("focal"));
        ds.baseline = std::stod(require("baseline"));
        const double cx = std::stod(require("cx"));
        const double cy = std::stod(require("cy"));
        const double disp_min = std::stod(require("disp_min"));
        const double disp_max = std::stod(require("disp_max"));
        if (disp_min <= 0 || disp_max <= disp_min) throw ParseError("invalid disparity range");
        ds.range = DepthRange{ds.focal * ds.baseline / disp_max, ds.focal * ds.baseline / disp_min};
        Mat3 K = Mat3::Identity();
        K(0, 0) = ds.focal;
        K(1, 1) = ds.focal;
        K(0, 2) = cx;
        K(1, 2) = cy;
        for (int i = 0; i < n_views; ++i) {
            PinholeCamera cam;
            cam.intrinsics = K;
            cam.translation = Vec3(-ds.baseline * i, 0, 0);
            cam.view_id = i;
            ds.cameras.push_back(cam);
        }
    } else {
        ds.range = DepthRange{std::stod(require("depth_min")), std::stod(require("depth_max"))};
        // Optional pinhole pair for disparity-domain evaluation.
        if (get("eval_focal")) ds.focal = std::stod(*get("eval_focal"));
        if (get("eval_baseline")) ds.baseline = std::stod(*get("eval_baseline"));
        for (int i = 0; i < n_views; ++i) {
            const std::string si = std::to_string(i);
            const auto K = detail::parse_numbers(require("K" + si), 9, "K" + si);
            const auto R = detail::parse_numbers(require("R" + si), 9, "R" + si);
            const auto t = detail::parse_numbers(require("t" + si), 3, "t" + si);
            PinholeCamera cam;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    cam.intrinsics(r, c) = K[r * 3 + c];
                    cam.rotation(r, c) = R[r * 3 + c];
                }
            cam.translation = Vec3(t[0], t[1], t[2]);
            cam.view_id = i;
            ds.cameras.push_back(cam);
        }
    }
    ds.range.validate();
    for (const auto& cam : ds.cameras) cam.validate();

    ds.gt_type = get("gt_type").value_or("depth");
    for (int i = 0; i < n_views; ++i) {
        const std::string si = std::to_string(i);
        ds.image_paths.push_back(resolve(require("image" + si)));
        ds.gt_paths.push_back(get("gt" + si) ? resolve(*get("gt" + si)) : std::string());
        ds.mask_nocc_paths.push_back(get("mask_nocc" + si) ? resolve(*get("mask_nocc" + si)) : std::string());
    }
    return ds;
}

inline MultiViewSet load_dataset(const DatasetDescriptor& ds) {
    MultiViewSet mvs;
    mvs.cameras = ds.cameras;
    mvs.range = ds.range;
    for (const auto& p : ds.image_paths) {
        if (!std::filesystem::exists(p)) throw IoError("missing image: " + p);
        mvs.images.push_back(read_image(p));
    }
    for (std::size_t i = 1; i < mvs.images.size(); ++i)
        if (mvs.images[i].width != mvs.images[0].width || mvs.images[i].height != mvs.images[0].height)
            throw InvariantError("all views must share dimensions");
    for (const auto& img : mvs.images)
        for (float v : img.data)
            if (!std::isfinite(v)) throw InvariantError("non-finite pixel in input image");
    return mvs;
}

inline std::pair<DatasetDescriptor, MultiViewSet> load_dataset(const std::string& manifest_path) {
    DatasetDescriptor ds = load_manifest(manifest_path);
    return {ds, load_dataset(ds)};
}

}  // namespace lfd
