#pragma once

#include <string>
#include <vector>

#include "oie/autodiff.hpp"
#include "oie/rng.hpp"

namespace oie {

struct EncoderConfig;

struct MoloraConfig {
  int num_experts = 6;      // T
  int rank = 64;            // r; values near or above the site width are
                            // accepted (the sweep grid goes to 128), r << d
                            // only holds at full scale
  int top_k = 4;            // experts combined per layer
  double alpha_scale = 16.0;
  bool adapt_embedding = false;  // extra site on the embedding output

  void validate() const;
};

// One low-rank expert: the delta applied to a site vector h of width dim is
// (alpha_scale / rank) * up * (down * h), with down drawn from a seeded
// Gaussian (std 0.02) and up all-zero so attachment starts as the identity.
struct LoraAdapter {
  Parameter down;  // [rank x dim]
  Parameter up;    // [dim x rank]
};

enum class SiteKind { attn_q, attn_v, ffn_in, ffn_out, embedding };

const char* site_kind_name(SiteKind k);

struct LoraSite {
  std::string name;
  int layer = 0;  // -1 for the embedding site
  SiteKind kind = SiteKind::attn_q;
  int dim = 0;
  std::vector<LoraAdapter> experts;
};

struct GateDecision {
  std::vector<double> full_weights;   // softmax over all T experts
  std::vector<int> selected;          // k indices, by descending weight,
                                      // ties broken toward lower index
  std::vector<double> renormalized;   // selected weights rescaled to sum 1
};

// Deterministic top-k of the softmax of feature . gate_matrix.
GateDecision gate(const Tensor& feature, const Tensor& gate_matrix, int k);

// Pure mixture application for tests and diagnostics: h + sum over selected
// experts of g_t * (alpha/r) * up_t (down_t h).
Tensor apply_mixture_reference(const Tensor& h, const LoraSite& site,
                               const GateDecision& decision, double alpha_scale,
                               int rank);

class LoraExpertPool {
 public:
  // Builds pools for every attachment site the encoder exposes: the q and v
  // projections of every layer plus both feed-forward matrices, and
  // optionally the embedding output.
  static LoraExpertPool create(const EncoderConfig& enc, const MoloraConfig& cfg,
                               Rng& rng);

  const MoloraConfig& config() const { return cfg_; }
  const std::vector<LoraSite>& sites() const { return sites_; }
  std::vector<LoraSite>& sites() { return sites_; }
  const std::vector<Parameter>& gate_matrices() const { return gates_; }
  std::vector<Parameter>& gate_matrices() { return gates_; }

  int site_index(int layer, SiteKind kind) const;
  // Gate matrix index for a layer; the embedding site uses its own.
  int gate_index(int layer) const;

  // On-tape gate evaluation from the layer's sentence-marker hidden state
  // [1 x d]. The decision (selection) is recorded off-tape; the returned
  // weights [1 x k] are the renormalized mixture weights on tape.
  struct TapeGate {
    GateDecision decision;
    Var weights;
  };
  TapeGate gate_on_tape(Tape& t, Var marker_state, int gate_idx);

  // h + weighted low-rank deltas of the selected experts.
  Var apply(Tape& t, Var h, int site_idx, const TapeGate& g);

  void for_each_param(const std::function<void(Parameter&)>& fn);

 private:
  MoloraConfig cfg_;
  std::vector<LoraSite> sites_;
  std::vector<Parameter> gates_;  // one [d x T] matrix per layer (+embedding)
  bool has_embedding_site_ = false;
};

std::vector<int> topk_indices(const std::vector<double>& scores, int k);

}  // namespace oie
