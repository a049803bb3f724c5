#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dht {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_be32(std::istream& is, const std::string& path, long offset) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    if (!is)
        throw std::runtime_error(path + ": truncated at offset " + std::to_string(offset));
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

void LabeledDataset::recompute_box() {
    if (examples.empty()) {
        box_lo.clear();
        box_hi.clear();
        return;
    }
    const std::size_t d = examples.front().first.values.size();
    box_lo.assign(d, std::numeric_limits<double>::infinity());
    box_hi.assign(d, -std::numeric_limits<double>::infinity());
    for (const auto& [x, y] : examples) {
        for (std::size_t i = 0; i < d; ++i) {
            box_lo[i] = std::min(box_lo[i], x.values[i]);
            box_hi[i] = std::max(box_hi[i], x.values[i]);
        }
    }
}

LabeledDataset LabeledDataset::lifted() const {
    if (!examples.empty() && examples.front().first.has_bias)
        return *this;
    LabeledDataset out = *this;
    for (auto& [x, y] : out.examples)
        x = x.lifted();
    out.dim = dim + 1;
    out.box_lo.push_back(1.0);
    out.box_hi.push_back(1.0);
    return out;
}

ProjectionMatrix make_projection(int big_dim, int small_dim, std::uint64_t seed) {
    if (big_dim < 1 || small_dim < 1)
        throw std::invalid_argument("make_projection: dims must be positive");
    ProjectionMatrix pm;
    pm.seed = seed;
    pm.p = Matrix(big_dim, small_dim);
    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(big_dim));
    for (double& v : pm.p.data)
        v = rng.normal(0.0, stddev);
    return pm;
}

LabeledDataset gen_halfmoon(int n, double noise, std::uint64_t seed) {
    if (n < 2)
        throw std::invalid_argument("gen_halfmoon: n must be >= 2");
    if (noise < 0.0)
        throw std::invalid_argument("gen_halfmoon: noise must be >= 0");
    LabeledDataset data;
    data.dim = 2;
    data.name = "halfmoon";
    Rng rng(seed);
    const int n_upper = n / 2 + n % 2;
    const int n_lower = n / 2;
    data.examples.reserve(n);
    for (int i = 0; i < n_upper; ++i) {
        const double t = n_upper == 1 ? 0.0 : kPi * i / (n_upper - 1);
        Vector x{std::cos(t), std::sin(t)};
        x[0] += noise * rng.normal();
        x[1] += noise * rng.normal();
        data.examples.emplace_back(FeatureVector(std::move(x)), SoftLabel::from_sign(+1));
    }
    for (int i = 0; i < n_lower; ++i) {
        const double t = n_lower == 1 ? 0.0 : kPi * i / (n_lower - 1);
        Vector x{1.0 - std::cos(t), 0.5 - std::sin(t)};
        x[0] += noise * rng.normal();
        x[1] += noise * rng.normal();
        data.examples.emplace_back(FeatureVector(std::move(x)), SoftLabel::from_sign(-1));
    }
    data.recompute_box();
    return data;
}

LabeledDataset gen_blobs(int n, int dim, double separation, std::uint64_t seed) {
    if (dim < 1)
        throw std::invalid_argument("gen_blobs: dim must be >= 1");
    if (n < 2)
        throw std::invalid_argument("gen_blobs: n must be >= 2");
    LabeledDataset data;
    data.dim = dim;
    data.name = "blobs";
    Rng rng(seed);
    Vector u(dim);
    double un = 0.0;
    do {
        for (double& v : u)
            v = rng.normal();
        un = norm(u);
    } while (un < 1e-12);
    for (double& v : u)
        v /= un;
    const int n_pos = n / 2 + n % 2;
    data.examples.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int sign = i < n_pos ? +1 : -1;
        Vector x(dim);
        for (int j = 0; j < dim; ++j)
            x[j] = sign * 0.5 * separation * u[j] + rng.normal();
        data.examples.emplace_back(FeatureVector(std::move(x)), SoftLabel::from_sign(sign));
    }
    data.recompute_box();
    return data;
}

void apply_label_noise(LabeledDataset& data, double flip_prob, std::uint64_t seed) {
    if (flip_prob <= 0.0)
        return;
    Rng rng(seed);
    for (auto& [x, y] : data.examples)
        if (rng.bernoulli(flip_prob))
            y = SoftLabel::from_sign(y.scalar() >= 0.0 ? -1 : +1);
}

LabeledDataset project_features(const LabeledDataset& data, const ProjectionMatrix& p) {
    if (data.dim != p.p.rows)
        throw std::invalid_argument("project_features: dimension mismatch");
    LabeledDataset out;
    out.dim = p.p.cols;
    out.name = data.name + "_proj" + std::to_string(p.p.cols);
    out.split_tag = data.split_tag;
    out.examples.reserve(data.examples.size());
    for (const auto& [x, y] : data.examples) {
        Vector px(p.p.cols, 0.0);
        for (int r = 0; r < p.p.rows; ++r) {
            const double xv = x.values[r];
            if (xv == 0.0)
                continue;
            const double* row = p.p.data.data() + static_cast<std::size_t>(r) * p.p.cols;
            for (int c = 0; c < p.p.cols; ++c)
                px[c] += row[c] * xv;
        }
        out.examples.emplace_back(FeatureVector(std::move(px)), y);
    }
    out.recompute_box();
    return out;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int class_pos, int class_neg, int per_class_cap) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs)
        throw std::runtime_error("cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs)
        throw std::runtime_error("cannot open " + labels_path);

    const std::uint32_t img_magic = read_be32(imgs, images_path, 0);
    if (img_magic != 0x00000803u)
        throw std::runtime_error(images_path + ": bad magic at offset 0 (expected 0x00000803)");
    const std::uint32_t lab_magic = read_be32(labs, labels_path, 0);
    if (lab_magic != 0x00000801u)
        throw std::runtime_error(labels_path + ": bad magic at offset 0 (expected 0x00000801)");

    const std::uint32_t n_imgs = read_be32(imgs, images_path, 4);
    const std::uint32_t rows = read_be32(imgs, images_path, 8);
    const std::uint32_t cols = read_be32(imgs, images_path, 12);
    const std::uint32_t n_labs = read_be32(labs, labels_path, 4);
    if (n_imgs != n_labs)
        throw std::runtime_error("image/label count mismatch: " + std::to_string(n_imgs) + " vs " +
                                 std::to_string(n_labs));
    if (class_pos < 0 || class_pos > 255 || class_neg < 0 || class_neg > 255)
        throw std::runtime_error("class filter outside the IDX label range");

    const std::size_t pix = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pix);
    LabeledDataset data;
    data.dim = static_cast<int>(pix);
    data.name = "idx";
    int kept_pos = 0, kept_neg = 0;
    for (std::uint32_t i = 0; i < n_imgs; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
        if (!imgs)
            throw std::runtime_error(images_path + ": truncated at offset " +
                                     std::to_string(16 + static_cast<long>(i) * pix));
        char lab = 0;
        labs.read(&lab, 1);
        if (!labs)
            throw std::runtime_error(labels_path + ": truncated at offset " +
                                     std::to_string(8 + static_cast<long>(i)));
        const int cls = static_cast<unsigned char>(lab);
        int sign = 0;
        if (cls == class_pos && (per_class_cap <= 0 || kept_pos < per_class_cap)) {
            sign = +1;
            ++kept_pos;
        } else if (cls == class_neg && (per_class_cap <= 0 || kept_neg < per_class_cap)) {
            sign = -1;
            ++kept_neg;
        } else {
            continue;
        }
        Vector x(pix);
        for (std::size_t j = 0; j < pix; ++j)
            x[j] = buf[j] / 255.0;
        data.examples.emplace_back(FeatureVector(std::move(x)), SoftLabel::from_sign(sign));
    }
    data.recompute_box();
    return data;
}

std::vector<LabeledDataset> split(const LabeledDataset& data, const std::vector<double>& fractions,
                                  std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (f <= 0.0)
            throw std::invalid_argument("split: fractions must be positive");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");

    // Per-class index lists, shuffled deterministically.
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < data.examples.size(); ++i)
        (data.examples[i].second.scalar() >= 0.0 ? pos : neg).push_back(i);
    Rng rng(seed);
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.choice(i)]);
    };
    shuffle(pos);
    shuffle(neg);

    const std::size_t k = fractions.size();
    std::vector<LabeledDataset> out(k);
    for (std::size_t s = 0; s < k; ++s) {
        out[s].dim = data.dim;
        out[s].name = data.name;
        out[s].split_tag = s == 0 ? SplitTag::Train : (s + 1 == k ? SplitTag::Test : SplitTag::Val);
    }

    // Largest-remainder allocation within each class keeps splits exhaustive
    // and the per-split class ratio within one sample of the global ratio.
    auto allocate = [&](const std::vector<std::size_t>& idx) {
        const std::size_t n = idx.size();
        std::vector<std::size_t> counts(k);
        std::vector<std::pair<double, std::size_t>> rema(k);
        std::size_t assigned = 0;
        for (std::size_t s = 0; s < k; ++s) {
            const double want = fractions[s] * static_cast<double>(n);
            counts[s] = static_cast<std::size_t>(want);
            rema[s] = {want - static_cast<double>(counts[s]), s};
            assigned += counts[s];
        }
        std::stable_sort(rema.begin(), rema.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t j = 0; assigned < n; ++j, ++assigned)
            ++counts[rema[j % k].second];
        std::size_t off = 0;
        for (std::size_t s = 0; s < k; ++s)
            for (std::size_t j = 0; j < counts[s]; ++j)
                out[s].examples.push_back(data.examples[idx[off++]]);
    };
    allocate(pos);
    allocate(neg);
    for (auto& part : out)
        part.recompute_box();
    return out;
}

void save_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot write " + path);
    os.precision(17);
    for (const auto& [x, y] : data.examples) {
        os << y.y[0] << "," << y.y[1];
        for (double v : x.values)
            os << "," << v;
        os << "\n";
    }
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    LabeledDataset data;
    data.name = "csv";
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        Vector cells;
        while (std::getline(ss, cell, ','))
            cells.push_back(std::stod(cell));
        if (cells.size() < 3)
            throw std::runtime_error(path + ": line " + std::to_string(lineno) + " too short");
        SoftLabel y;
        y.y[0] = cells[0];
        y.y[1] = cells[1];
        Vector x(cells.begin() + 2, cells.end());
        if (data.dim == 0)
            data.dim = static_cast<int>(x.size());
        else if (data.dim != static_cast<int>(x.size()))
            throw std::runtime_error(path + ": inconsistent dims at line " + std::to_string(lineno));
        data.examples.emplace_back(FeatureVector(std::move(x)), y);
    }
    data.recompute_box();
    return data;
}

MulticlassDataset gen_blobs_multiclass(int n, int dim, int n_classes, double separation,
                                       std::uint64_t seed) {
    if (dim < 1 || n_classes < 2 || n < n_classes)
        throw std::invalid_argument("gen_blobs_multiclass: bad shape");
    MulticlassDataset data;
    data.dim = dim;
    data.n_classes = n_classes;
    Rng rng(seed);
    std::vector<Vector> centers;
    for (int c = 0; c < n_classes; ++c) {
        Vector u(dim);
        double un = 0.0;
        do {
            for (double& v : u)
                v = rng.normal();
            un = norm(u);
        } while (un < 1e-12);
        for (double& v : u)
            v = v / un * 0.5 * separation;
        centers.push_back(std::move(u));
    }
    data.examples.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int c = i % n_classes;
        Vector x(dim);
        for (int j = 0; j < dim; ++j)
            x[j] = centers[c][j] + rng.normal();
        data.examples.emplace_back(std::move(x), c);
    }
    return data;
}

}  // namespace dht
