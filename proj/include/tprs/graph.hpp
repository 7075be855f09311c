#pragma once

#include <string>
#include <vector>

#include "tprs/rng.hpp"
#include "tprs/tensor.hpp"

namespace tprs {

enum class BiomarkerId { kHbA1c = 0, kRetinalThickness = 1, kVegf = 2 };
constexpr int kNumBiomarkers = 3;

std::string biomarker_name(BiomarkerId id);
BiomarkerId biomarker_from_name(const std::string& name);

struct BiomarkerSeries {
  BiomarkerId id = BiomarkerId::kHbA1c;
  std::vector<double> timestamps;  // months, strictly increasing
  std::vector<double> values;      // native units
  void validate() const;
};

// One node per (biomarker, timepoint). Node features are
// [min-max normalized value, time / time_scale, one-hot biomarker id],
// so d_node = 2 + kNumBiomarkers. Edges connect consecutive timepoints
// within a biomarker chain plus same-timestamp pairs across biomarkers.
struct TemporalGraph {
  int num_nodes = 0;
  std::vector<double> features;   // [num_nodes x d_node] row-major
  std::vector<double> adjacency;  // [num_nodes x num_nodes] symmetric 0/1
  static constexpr int feature_dim() { return 2 + kNumBiomarkers; }
  double adj(int i, int j) const {
    return adjacency[static_cast<size_t>(i) * num_nodes + j];
  }
};

TemporalGraph build_graph(const std::vector<BiomarkerSeries>& series,
                          double meta_time_scale);

// A_hat = D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
std::vector<double> normalize_adjacency(const std::vector<double>& a, int n);

struct GcnParams {
  std::vector<Tensor> layer_weights;  // L matrices, no bias per layer
  Tensor readout_w;                   // [hidden, 64]
  Tensor readout_b;                   // [64]
  static GcnParams init(int in_dim, int hidden, int layers, int out_dim,
                        Rng& rng);
  std::vector<Tensor*> params();
};

// H^{l+1} = ReLU(A_hat H^l W^l), H^0 = node features (constant input).
Tensor gcn_forward(const TemporalGraph& graph, const GcnParams& params);

// mean over node rows, then linear projection to the readout width
Tensor readout(const Tensor& node_states, const GcnParams& params);

int64_t gcn_param_count(int in_dim, int hidden, int layers, int out_dim);

}  // namespace tprs
