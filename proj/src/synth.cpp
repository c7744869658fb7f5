#include "dprune/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dprune/rng.hpp"

namespace dprune {

namespace {

struct Seg {
    double x0, y0, x1, y1;
};

// seven-segment corners on a 1x2 box: A top, B/C right, D bottom, E/F left,
// G middle
constexpr Seg kSegments[7] = {
    {0, 0, 1, 0},  // A
    {1, 0, 1, 1},  // B
    {1, 1, 1, 2},  // C
    {0, 2, 1, 2},  // D
    {0, 1, 0, 2},  // E
    {0, 0, 0, 1},  // F
    {0, 1, 1, 1},  // G
};

constexpr const char* kDigitSegments[10] = {
    "ABCDEF", "BC", "ABGED", "ABGCD", "FGBC", "AFGCD", "AFGEDC", "ABC", "ABCDEFG", "ABCDFG",
};

double point_segment_dist(double px, double py, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
}

// a stroke is a segment bent through a displaced midpoint
struct Stroke {
    double x0, y0, xm, ym, x1, y1, width;
};

double stroke_dist(double px, double py, const Stroke& s) {
    return std::min(point_segment_dist(px, py, s.x0, s.y0, s.xm, s.ym),
                    point_segment_dist(px, py, s.xm, s.ym, s.x1, s.y1));
}

void render_digit(int digit, Rng& rng, std::uint8_t* out) {
    // independently warped corner grid: columns x in {0,1}, rows y in {0,1,2}
    double cx[2][3], cy[2][3];
    for (int col = 0; col < 2; ++col)
        for (int row = 0; row < 3; ++row) {
            cx[col][row] = col + rng.uniform(-0.08, 0.08);
            cy[col][row] = row + rng.uniform(-0.08, 0.08);
        }

    const double angle = rng.uniform(-0.19, 0.19);
    const double scale = rng.uniform(0.80, 1.14);
    const double shear = rng.uniform(-0.16, 0.16);
    const double tx = rng.uniform(-2.8, 2.8);
    const double ty = rng.uniform(-2.2, 2.2);
    const double base_width = rng.uniform(1.0, 1.9);
    const double brightness = rng.uniform(0.70, 1.0);
    const double grad_x = rng.uniform(-0.25, 0.25);
    const double grad_y = rng.uniform(-0.25, 0.25);
    const double ca = std::cos(angle), sa = std::sin(angle);

    auto map = [&](double x, double y, double& ox, double& oy) {
        double ux = (x - 0.5) * 9.0 + shear * (1.0 - y) * 4.0;
        double uy = (y - 1.0) * 9.0;
        ox = 14.0 + scale * (ca * ux - sa * uy) + tx;
        oy = 14.0 + scale * (sa * ux + ca * uy) + ty;
    };

    Stroke strokes[7];
    std::size_t nstrokes = 0;
    for (const char* c = kDigitSegments[digit]; *c; ++c) {
        const Seg tpl = kSegments[*c - 'A'];
        // endpoints snap to the warped corner grid
        const double x0 = cx[int(tpl.x0)][int(tpl.y0)], y0 = cy[int(tpl.x0)][int(tpl.y0)];
        const double x1 = cx[int(tpl.x1)][int(tpl.y1)], y1 = cy[int(tpl.x1)][int(tpl.y1)];
        // curvature: midpoint displaced along the normal
        const double bend = rng.uniform(-0.12, 0.12);
        double nx = -(y1 - y0), ny = x1 - x0;
        const double nn = std::hypot(nx, ny);
        if (nn > 0) {
            nx /= nn;
            ny /= nn;
        }
        const double xm = 0.5 * (x0 + x1) + bend * nx, ym = 0.5 * (y0 + y1) + bend * ny;

        Stroke s{};
        map(x0, y0, s.x0, s.y0);
        map(xm, ym, s.xm, s.ym);
        map(x1, y1, s.x1, s.y1);
        s.width = (base_width + rng.uniform(-0.2, 0.2)) * scale;
        strokes[nstrokes++] = s;
    }

    for (int py = 0; py < 28; ++py) {
        for (int px = 0; px < 28; ++px) {
            double v = 0.0;
            for (std::size_t s = 0; s < nstrokes; ++s) {
                const double d = stroke_dist(px, py, strokes[s]);
                v = std::max(v, 1.0 - d / strokes[s].width);
            }
            const double shade =
                brightness * (1.0 + grad_x * (px - 14.0) / 14.0 + grad_y * (py - 14.0) / 14.0);
            double intensity = 255.0 * shade * std::clamp(v, 0.0, 1.0);
            intensity += rng.uniform(-11.0, 11.0);  // sensor-like noise
            out[py * 28 + px] =
                static_cast<std::uint8_t>(std::clamp(intensity, 0.0, 255.0));
        }
    }
}

}  // namespace

RawDataset synthesize_digits(std::size_t count, std::uint64_t seed) {
    RawDataset data;
    data.images.resize(count * kPixelsPerImage);
    data.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(mix64(seed, 0x51A9ULL + i));
        const int digit = static_cast<int>(rng.index(10));
        data.labels[i] = static_cast<std::uint8_t>(digit);
        render_digit(digit, rng, data.images.data() + i * kPixelsPerImage);
    }
    return data;
}

namespace {

void write_idx_pair(const std::string& dir, const std::string& images_name,
                    const std::string& labels_name, const RawDataset& data) {
    IdxImages images{data.count(), 28, 28, data.images};
    IdxLabels labels{data.count(), data.labels};
    for (const auto& [name, bytes] :
         {std::pair{images_name, serialize_idx_images(images)},
          std::pair{labels_name, serialize_idx_labels(labels)}}) {
        const auto path = std::filesystem::path(dir) / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open " + path.string() + " for writing");
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed for " + path.string());
    }
}

}  // namespace

void write_synthetic_mnist(const std::string& dir, std::size_t train_count,
                           std::size_t test_count, std::uint64_t seed,
                           const MnistFiles& files) {
    std::filesystem::create_directories(dir);
    write_idx_pair(dir, files.train_images, files.train_labels,
                   synthesize_digits(train_count, mix64(seed, 0x7261ULL)));
    write_idx_pair(dir, files.test_images, files.test_labels,
                   synthesize_digits(test_count, mix64(seed, 0x7465ULL)));
}

}  // namespace dprune
