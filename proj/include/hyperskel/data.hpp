#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyperskel/tensor.hpp"

namespace hyperskel {

struct SkeletonSequence {
    int label = 0;
    std::string subject;
    std::string view;
    int m = 0;  // persons
    int v = 0;  // joints
    int t = 0;  // frames
    int c = 3;  // coordinates
    std::vector<double> joints;  // m x v x t x c, row major

    double& at(int mi, int vi, int ti, int ci) {
        return joints[((static_cast<std::size_t>(mi) * v + vi) * t + ti) * c + ci];
    }
    double at(int mi, int vi, int ti, int ci) const {
        return joints[((static_cast<std::size_t>(mi) * v + vi) * t + ti) * c + ci];
    }
};

struct SkeletonBatch {
    int n = 0, m = 0, v = 0, t = 0, c = 3;
    std::vector<double> x;   // n x m x v x t x c
    std::vector<int> labels; // n

    double at(int ni, int mi, int vi, int ti, int ci) const {
        return x[(((static_cast<std::size_t>(ni) * m + mi) * v + vi) * t + ti) * c + ci];
    }
};

struct Manifest {
    std::string train;
    std::string val;
    std::string layout;
    int num_classes = 0;
};

std::vector<SkeletonSequence> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<SkeletonSequence>& seqs);
Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& m);

// class-specific limb oscillation patterns plus gaussian noise
std::vector<SkeletonSequence> synth_generate(int n_classes, int per_class, int v,
                                             int t_raw, std::uint64_t seed,
                                             double noise_sigma = 0.02);

// linear interpolation along time to t_target frames
SkeletonSequence resize_temporal(const SkeletonSequence& s, int t_target);

// subtracts each person's first-frame root joint from the whole sequence
SkeletonSequence center_on_root(const SkeletonSequence& s, int root_joint = 0);

// "nwucla20" (20 joints), "ntu25" (25 joints), "chainN" (N joints);
// symmetric with self-loops
Tensor skeleton_adjacency(const std::string& layout);
int layout_joint_count(const std::string& layout);

// pairwise raw offsets x_i - x_j, shape (v, v, c)
Tensor bone_offsets(const Tensor& x_frame);

// preprocess (resize + center) and pack shuffled fixed-size batches
std::vector<SkeletonBatch> make_batches(const std::vector<SkeletonSequence>& seqs,
                                        int batch_size, int t_target,
                                        std::uint64_t shuffle_seed, bool shuffle);

}  // namespace hyperskel
