#include "oie/molora.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oie/encoder.hpp"

namespace oie {

void MoloraConfig::validate() const {
  if (num_experts < 1) throw std::invalid_argument("molora: need at least one expert");
  if (rank < 1) throw std::invalid_argument("molora: rank must be positive");
  if (top_k < 1 || top_k > num_experts) {
    throw std::invalid_argument("molora: top_k must be in [1, num_experts]");
  }
  if (alpha_scale <= 0.0) throw std::invalid_argument("molora: alpha_scale must be positive");
}

const char* site_kind_name(SiteKind k) {
  switch (k) {
    case SiteKind::attn_q: return "attn_q";
    case SiteKind::attn_v: return "attn_v";
    case SiteKind::ffn_in: return "ffn_in";
    case SiteKind::ffn_out: return "ffn_out";
    case SiteKind::embedding: return "embedding";
  }
  return "?";
}

std::vector<int> topk_indices(const std::vector<double>& scores, int k) {
  if (k < 1 || k > static_cast<int>(scores.size())) {
    throw std::invalid_argument("topk_indices: k out of range");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

GateDecision gate(const Tensor& feature, const Tensor& gate_matrix, int k) {
  if (gate_matrix.ndim() != 2) {
    throw std::invalid_argument("gate: gate matrix must be [d x T]");
  }
  const int d = gate_matrix.dim(0);
  const int T = gate_matrix.dim(1);
  if (feature.numel() != d) {
    throw std::invalid_argument("gate: feature width does not match gate matrix");
  }
  if (k < 1 || k > T) {
    throw std::invalid_argument("gate: k must be in [1, T]");
  }
  std::vector<double> logits(static_cast<std::size_t>(T), 0.0);
  for (int j = 0; j < T; ++j) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += feature.at(i) * gate_matrix.at(i, j);
    logits[static_cast<std::size_t>(j)] = s;
  }
  GateDecision dec;
  dec.full_weights = tsoftmax(logits);
  dec.selected = topk_indices(dec.full_weights, k);
  double sum = 0.0;
  for (int idx : dec.selected) sum += dec.full_weights[static_cast<std::size_t>(idx)];
  dec.renormalized.reserve(dec.selected.size());
  for (int idx : dec.selected) {
    dec.renormalized.push_back(dec.full_weights[static_cast<std::size_t>(idx)] / sum);
  }
  return dec;
}

Tensor apply_mixture_reference(const Tensor& h, const LoraSite& site,
                               const GateDecision& decision, double alpha_scale,
                               int rank) {
  Tensor out = h;
  const double scaling = alpha_scale / rank;
  for (std::size_t j = 0; j < decision.selected.size(); ++j) {
    const LoraAdapter& e = site.experts[static_cast<std::size_t>(decision.selected[j])];
    Tensor mid = tmatmul(h, ttranspose(e.down.value));       // [n x r]
    Tensor delta = tmatmul(mid, ttranspose(e.up.value));     // [n x dim]
    out = tadd(out, tscale(delta, scaling * decision.renormalized[j]));
  }
  return out;
}

LoraExpertPool LoraExpertPool::create(const EncoderConfig& enc,
                                      const MoloraConfig& cfg, Rng& rng) {
  cfg.validate();
  LoraExpertPool pool;
  pool.cfg_ = cfg;
  pool.has_embedding_site_ = cfg.adapt_embedding;

  auto make_site = [&](const std::string& name, int layer, SiteKind kind,
                       int dim) {
    LoraSite site;
    site.name = name;
    site.layer = layer;
    site.kind = kind;
    site.dim = dim;
    for (int t = 0; t < cfg.num_experts; ++t) {
      const std::string base = "pool." + name + ".expert" + std::to_string(t);
      Tensor down({cfg.rank, dim});
      for (double& v : down.data) v = rng.gaussian(0.0, 0.02);
      LoraAdapter a;
      a.down = Parameter(base + ".down", ParamGroup::lora, std::move(down));
      a.up = Parameter(base + ".up", ParamGroup::lora, Tensor({dim, cfg.rank}));
      site.experts.push_back(std::move(a));
    }
    pool.sites_.push_back(std::move(site));
  };

  auto make_gate = [&](const std::string& name) {
    Tensor w({enc.hidden, cfg.num_experts});
    for (double& v : w.data) v = rng.gaussian(0.0, 0.02);
    pool.gates_.emplace_back("pool.gate." + name, ParamGroup::gate, std::move(w));
  };

  if (cfg.adapt_embedding) {
    make_site("embedding", -1, SiteKind::embedding, enc.hidden);
    make_gate("embedding");
  }
  for (int l = 0; l < enc.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    make_site(p + ".attn_q", l, SiteKind::attn_q, enc.hidden);
    make_site(p + ".attn_v", l, SiteKind::attn_v, enc.hidden);
    make_site(p + ".ffn_in", l, SiteKind::ffn_in, enc.ffn_inner);
    make_site(p + ".ffn_out", l, SiteKind::ffn_out, enc.hidden);
    make_gate(p);
  }
  return pool;
}

int LoraExpertPool::site_index(int layer, SiteKind kind) const {
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (sites_[i].layer == layer && sites_[i].kind == kind) {
      return static_cast<int>(i);
    }
  }
  throw std::invalid_argument("molora: no such attachment site");
}

int LoraExpertPool::gate_index(int layer) const {
  if (layer == -1) {
    if (!has_embedding_site_) {
      throw std::invalid_argument("molora: embedding site not attached");
    }
    return 0;
  }
  return (has_embedding_site_ ? 1 : 0) + layer;
}

LoraExpertPool::TapeGate LoraExpertPool::gate_on_tape(Tape& t, Var marker_state,
                                                      int gate_idx) {
  Parameter& wa = gates_.at(static_cast<std::size_t>(gate_idx));
  Var logits = t.matmul(marker_state, t.leaf(wa));  // [1 x T]

  TapeGate out;
  out.decision = gate(t.val(marker_state), wa.value, cfg_.top_k);
  // Softmax over the gathered selected logits: algebraically the same as
  // renormalizing the full softmax, with exactly zero gradient to the
  // unselected gate columns.
  Var sel = t.gather_cols(logits, out.decision.selected);
  out.weights = t.softmax(sel, 1);
  return out;
}

Var LoraExpertPool::apply(Tape& t, Var h, int site_idx, const TapeGate& g) {
  LoraSite& site = sites_.at(static_cast<std::size_t>(site_idx));
  if (t.val(h).ndim() != 2 || t.val(h).dim(1) != site.dim) {
    throw std::invalid_argument("molora apply: hidden width does not match site " +
                                site.name);
  }
  const double scaling = cfg_.alpha_scale / cfg_.rank;
  Var out = h;
  for (std::size_t j = 0; j < g.decision.selected.size(); ++j) {
    LoraAdapter& e = site.experts[static_cast<std::size_t>(g.decision.selected[j])];
    Var mid = t.matmul(h, t.transpose(t.leaf(e.down)));
    Var delta = t.matmul(mid, t.transpose(t.leaf(e.up)));
    Var weighted = t.mul_scalar(t.scale(delta, scaling),
                                t.slice_cols(g.weights, static_cast<int>(j),
                                             static_cast<int>(j) + 1));
    out = t.add(out, weighted);
  }
  return out;
}

void LoraExpertPool::for_each_param(const std::function<void(Parameter&)>& fn) {
  for (auto& site : sites_) {
    for (auto& e : site.experts) {
      fn(e.down);
      fn(e.up);
    }
  }
  for (auto& g : gates_) fn(g);
}

}  // namespace oie
