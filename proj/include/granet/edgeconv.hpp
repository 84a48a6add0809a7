#pragma once

#include <string>
#include <vector>

#include "granet/graph.hpp"
#include "granet/nn.hpp"
#include "granet/tape.hpp"

namespace granet {

inline void edgeconv_init(ParameterStore& store, const std::string& prefix, std::size_t c_in,
                          std::size_t c_out, Rng& rng) {
  mlp_init(store, prefix + "/rel", {c_in, c_out}, rng);
  mlp_init(store, prefix + "/ctr", {c_in, c_out}, rng);
}

/// Edge convolution: per node i, elementwise max over its edges (i, j) of
/// rel(h_j - h_i), plus ctr(h_i). rel and ctr are single affine maps; nodes
/// without edges contribute nothing to the max and output ctr(h_i) alone.
inline Var edgeconv(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                    const std::string& prefix, const SceneGraph& graph, Var features,
                    std::size_t c_in, std::size_t c_out) {
  const Tensor& h = tape.val(features);
  if (h.cols() != c_in)
    throw std::invalid_argument("edgeconv " + prefix + ": feature width " +
                                std::to_string(h.cols()) + ", expected " + std::to_string(c_in));
  if (h.rows() != graph.node_count())
    throw std::invalid_argument("edgeconv " + prefix + ": feature rows " +
                                std::to_string(h.rows()) + " vs graph nodes " +
                                std::to_string(graph.node_count()));
  const std::size_t n = graph.node_count();
  Var center = mlp_apply(tape, binder, store, prefix + "/ctr", features, {c_in, c_out});
  if (graph.edges.empty()) return center;

  std::vector<std::size_t> src, dst;
  src.reserve(graph.edges.size());
  dst.reserve(graph.edges.size());
  for (auto [i, j] : graph.edges) {
    src.push_back(i);
    dst.push_back(j);
  }
  Var h_i = tape.gather_rows(features, src);
  Var h_j = tape.gather_rows(features, dst);
  Var msg = mlp_apply(tape, binder, store, prefix + "/rel", tape.sub(h_j, h_i), {c_in, c_out});
  Var pooled = tape.segment_max(msg, src, n, tape.constant(Tensor::zeros({n, c_out})));
  return tape.add(pooled, center);
}

/// Width-preserving edge convolution with a residual add on the input features.
inline Var edgeconv_residual(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                             const std::string& prefix, const SceneGraph& graph, Var features,
                             std::size_t width) {
  Var conv = edgeconv(tape, binder, store, prefix, graph, features, width, width);
  return tape.add(conv, features);
}

}  // namespace granet
