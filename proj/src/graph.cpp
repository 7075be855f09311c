#include "tprs/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "tprs/ops.hpp"
#include "tprs/preprocess.hpp"

namespace tprs {

std::string biomarker_name(BiomarkerId id) {
  switch (id) {
    case BiomarkerId::kHbA1c: return "hba1c";
    case BiomarkerId::kRetinalThickness: return "retinal_thickness";
    case BiomarkerId::kVegf: return "vegf";
  }
  throw std::logic_error("unknown biomarker id");
}

BiomarkerId biomarker_from_name(const std::string& name) {
  if (name == "hba1c") return BiomarkerId::kHbA1c;
  if (name == "retinal_thickness") return BiomarkerId::kRetinalThickness;
  if (name == "vegf") return BiomarkerId::kVegf;
  throw std::invalid_argument("unknown biomarker: " + name);
}

void BiomarkerSeries::validate() const {
  if (values.empty() || values.size() != timestamps.size()) {
    throw std::invalid_argument("biomarker series must be non-empty and aligned");
  }
  for (size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw std::invalid_argument("biomarker timestamps must be strictly increasing");
    }
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("biomarker values must be finite");
  }
}

TemporalGraph build_graph(const std::vector<BiomarkerSeries>& series,
                          double meta_time_scale) {
  if (series.empty()) {
    throw std::invalid_argument("build_graph: at least one series required");
  }
  if (meta_time_scale <= 0) {
    throw std::invalid_argument("build_graph: time scale must be positive");
  }

  int total = 0;
  for (const auto& s : series) {
    s.validate();
    total += static_cast<int>(s.values.size());
  }

  TemporalGraph g;
  g.num_nodes = total;
  const int d = TemporalGraph::feature_dim();
  g.features.assign(static_cast<size_t>(total) * d, 0.0);
  g.adjacency.assign(static_cast<size_t>(total) * total, 0.0);

  // node layout: series in the given order, timepoints in order inside each
  std::vector<int> offsets;
  int off = 0;
  for (const auto& s : series) {
    offsets.push_back(off);
    const auto norm = minmax_normalize(s.values);
    for (size_t t = 0; t < s.values.size(); ++t) {
      double* row = g.features.data() + static_cast<size_t>(off + t) * d;
      row[0] = norm[t];
      row[1] = s.timestamps[t] / meta_time_scale;
      row[2 + static_cast<int>(s.id)] = 1.0;
    }
    // chain edges between consecutive timepoints
    for (size_t t = 0; t + 1 < s.values.size(); ++t) {
      const int a = off + static_cast<int>(t), b = a + 1;
      g.adjacency[static_cast<size_t>(a) * total + b] = 1.0;
      g.adjacency[static_cast<size_t>(b) * total + a] = 1.0;
    }
    off += static_cast<int>(s.values.size());
  }

  // cross edges between different biomarkers at identical timestamps
  for (size_t i = 0; i < series.size(); ++i) {
    for (size_t j = i + 1; j < series.size(); ++j) {
      for (size_t ti = 0; ti < series[i].timestamps.size(); ++ti) {
        for (size_t tj = 0; tj < series[j].timestamps.size(); ++tj) {
          if (series[i].timestamps[ti] == series[j].timestamps[tj]) {
            const int a = offsets[i] + static_cast<int>(ti);
            const int b = offsets[j] + static_cast<int>(tj);
            g.adjacency[static_cast<size_t>(a) * total + b] = 1.0;
            g.adjacency[static_cast<size_t>(b) * total + a] = 1.0;
          }
        }
      }
    }
  }
  return g;
}

std::vector<double> normalize_adjacency(const std::vector<double>& a, int n) {
  if (static_cast<size_t>(n) * n != a.size()) {
    throw std::invalid_argument("normalize_adjacency: size mismatch");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = a[static_cast<size_t>(i) * n + j];
      if (v < 0) throw std::invalid_argument("adjacency must be non-negative");
      if (v != a[static_cast<size_t>(j) * n + i]) {
        throw std::invalid_argument("adjacency must be symmetric");
      }
    }
  }
  // degrees of A + I; the self-loop keeps isolated nodes well defined
  std::vector<double> deg(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 1.0;
    for (int j = 0; j < n; ++j) s += a[static_cast<size_t>(i) * n + j];
    deg[static_cast<size_t>(i)] = s;
  }
  std::vector<double> out(a.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double aij =
          a[static_cast<size_t>(i) * n + j] + (i == j ? 1.0 : 0.0);
      if (aij != 0.0) {
        out[static_cast<size_t>(i) * n + j] =
            aij / std::sqrt(deg[static_cast<size_t>(i)] *
                            deg[static_cast<size_t>(j)]);
      }
    }
  }
  return out;
}

GcnParams GcnParams::init(int in_dim, int hidden, int layers, int out_dim,
                          Rng& rng) {
  if (layers <= 0 || in_dim <= 0 || hidden <= 0 || out_dim <= 0) {
    throw std::invalid_argument("gcn params: bad dimensions");
  }
  GcnParams p;
  int w = in_dim;
  for (int l = 0; l < layers; ++l) {
    p.layer_weights.push_back(init_uniform_fanin({w, hidden}, w, rng));
    w = hidden;
  }
  p.readout_w = init_uniform_fanin({hidden, out_dim}, hidden, rng);
  p.readout_b = Tensor::zeros({out_dim}, true);
  return p;
}

std::vector<Tensor*> GcnParams::params() {
  std::vector<Tensor*> out;
  for (auto& w : layer_weights) out.push_back(&w);
  out.push_back(&readout_w);
  out.push_back(&readout_b);
  return out;
}

Tensor gcn_forward(const TemporalGraph& graph, const GcnParams& params) {
  if (graph.num_nodes <= 0) {
    throw std::invalid_argument("gcn_forward: graph has no nodes");
  }
  const int n = graph.num_nodes;
  const auto ahat = normalize_adjacency(graph.adjacency, n);
  Tensor a = Tensor::from_data({n, n}, ahat);               // constant per graph
  Tensor h = Tensor::from_data({n, TemporalGraph::feature_dim()}, graph.features);
  for (const auto& w : params.layer_weights) {
    if (h.dim(1) != w.dim(0)) {
      throw std::invalid_argument("gcn_forward: width chain mismatch");
    }
    h = relu(matmul(matmul(a, h), w));
  }
  return h;
}

Tensor readout(const Tensor& node_states, const GcnParams& params) {
  if (node_states.rank() != 2 || node_states.dim(0) < 1) {
    throw std::invalid_argument("readout: at least one node required");
  }
  return linear(mean_rows(node_states), params.readout_w, params.readout_b);
}

int64_t gcn_param_count(int in_dim, int hidden, int layers, int out_dim) {
  int64_t total = 0;
  int64_t w = in_dim;
  for (int l = 0; l < layers; ++l) {
    total += w * hidden;
    w = hidden;
  }
  return total + static_cast<int64_t>(hidden) * out_dim + out_dim;
}

}  // namespace tprs
