#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "learner.hpp"
#include "rng.hpp"
#include "vec.hpp"

namespace dht {

enum class SplitTag { Train, Val, Test };

struct LabeledDataset {
    std::vector<std::pair<FeatureVector, SoftLabel>> examples;
    int dim = 0;
    std::string name;
    SplitTag split_tag = SplitTag::Train;
    // Per-dimension bounds over the examples, fixed at generation time;
    // greedy synthesis is constrained to this box.
    Vector box_lo, box_hi;

    std::size_t size() const { return examples.size(); }
    void recompute_box();
    // Appends the constant-1 bias coordinate to every example (bounds
    // [1, 1]); no-op when already lifted.
    LabeledDataset lifted() const;
};

struct ProjectionMatrix {
    Matrix p;  // D x d, entries iid N(0, 1/D)
    std::uint64_t seed = 0;
};

ProjectionMatrix make_projection(int big_dim, int small_dim, std::uint64_t seed);

// Two interleaving half-circles with isotropic Gaussian noise; balanced
// +-1 labels (upper arc is class +1).
LabeledDataset gen_halfmoon(int n, double noise, std::uint64_t seed);

// Two unit-covariance Gaussian clusters at +-(separation/2) * u for a
// seed-random unit direction u.
LabeledDataset gen_blobs(int n, int dim, double separation, std::uint64_t seed);

// Flips each example's hard label with the given probability.
void apply_label_noise(LabeledDataset& data, double flip_prob, std::uint64_t seed);

// x' = P^T x for every example; labels unchanged.
LabeledDataset project_features(const LabeledDataset& data, const ProjectionMatrix& p);

// IDX ingestion (big-endian, magic 0x803 for images / 0x801 for labels).
// Keeps only the two filtered classes (first maps to +1), capped per class,
// pixels scaled to [0, 1] and flattened.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int class_pos, int class_neg, int per_class_cap);

// Seed-deterministic, class-stratified partition. Fractions must sum to 1.
std::vector<LabeledDataset> split(const LabeledDataset& data,
                                  const std::vector<double>& fractions, std::uint64_t seed);

void save_csv(const LabeledDataset& data, const std::string& path);
LabeledDataset load_csv(const std::string& path);

// Multiclass examples for the performative experiments; labels are class
// indices rather than two-component soft labels.
struct MulticlassDataset {
    std::vector<std::pair<Vector, int>> examples;
    int dim = 0;
    int n_classes = 0;
};

MulticlassDataset gen_blobs_multiclass(int n, int dim, int n_classes, double separation,
                                       std::uint64_t seed);

}  // namespace dht
