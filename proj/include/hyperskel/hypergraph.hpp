#pragma once

#include <cstdint>
#include <vector>

#include "hyperskel/tensor.hpp"

namespace hyperskel {

// node-to-hyperedge incidence (v x e, entries 0/1) plus diagonal
// hyperedge weights
struct Hypergraph {
    int v = 0;
    int e = 0;
    std::vector<double> incidence;  // row major v x e
    std::vector<double> weights;    // length e

    static Hypergraph from_incidence(int v, int e, std::vector<double> incidence,
                                     std::vector<double> weights);

    double h(int node, int edge) const { return incidence[static_cast<std::size_t>(node) * e + edge]; }
    Tensor incidence_tensor() const;
    Tensor weight_tensor() const;
    bool exactly_one_membership() const;
    std::vector<int> memberships() const;  // assumes exactly-one rows
};

struct DegreePair {
    std::vector<double> node_degree;  // weighted: sum_e h[i,e] * w[e]
    std::vector<double> edge_degree;  // unweighted member count
};

// uniform node allocation, identity weights; resamples until every
// hyperedge is non-empty
Hypergraph new_random(int v, int e, std::uint64_t seed);

DegreePair degree_pair(const Hypergraph& g);

// normalized hypergraph convolution
//   y = Dv^{-1/2} H Hw De^{-1} H^T Dv^{-1/2} x theta
// empty hyperedges contribute zero columns; a node with zero weighted
// degree is a singular-degree error
Tensor hyperconv(const Tensor& x, const Hypergraph& g, const Tensor& theta);

// same contraction with differentiable hyperedge weights
Tensor hyperconv_weighted(const Tensor& x, const Tensor& incidence, const Tensor& hw,
                          const Tensor& theta);

// the v x v node-mixing factor Dv^{-1/2} H Hw De^{-1} H^T Dv^{-1/2};
// differentiable in hw, reusable across the frames of a clip
Tensor hyperconv_mixing(const Tensor& incidence, const Tensor& hw);

// symmetric-normalized graph convolution y = D^{-1/2} A D^{-1/2} x w;
// missing self-loops are filled in unless disabled
Tensor adjacency_conv(const Tensor& x, const Tensor& adj, const Tensor& w,
                      bool add_self_loops = true);

}  // namespace hyperskel
