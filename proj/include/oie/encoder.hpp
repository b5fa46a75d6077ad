#pragma once

#include <optional>
#include <vector>

#include "oie/autodiff.hpp"
#include "oie/molora.hpp"
#include "oie/rng.hpp"

namespace oie {

struct EncoderConfig {
  int vocab_size = 0;
  int hidden = 64;
  int num_layers = 4;
  int num_heads = 4;
  int ffn_inner = 128;
  int max_len = 100;

  int head_dim() const { return hidden / num_heads; }
  void validate() const;
};

// Per-layer token representations, embedding output included, so there are
// num_layers + 1 entries. Row 0 of every state is the sentence-start marker.
struct HiddenStates {
  std::vector<Var> states;
  int seq_len = 0;  // marker + tokens

  Var embedding_output() const { return states.front(); }
  Var final_state() const { return states.back(); }
};

// The four unscaled components of one head's pre-softmax attention scores at
// a layer's input, split by (input - position) content and raw position
// rows. Their sum equals query_key exactly up to float addition order.
struct AttentionScoreTerms {
  Tensor content_content;
  Tensor content_position;
  Tensor position_content;
  Tensor position_position;
  Tensor full;  // (X Wq_h)(X Wk_h)^T, before the 1/sqrt(d_k) scaling
};

class Encoder {
 public:
  struct Layer {
    Parameter wq, wk, wv, wo;
    Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Parameter ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  };

  Encoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // Prepends the sentence-start marker, adds position to word embeddings,
  // then runs the layer stack. With a pool the adapter deltas are applied at
  // the attachment sites, gated per layer from the marker state.
  HiddenStates encode(Tape& t, const std::vector<int>& token_ids,
                      LoraExpertPool* pool = nullptr);

  AttentionScoreTerms attention_score_decomposition(
      int layer, int head, const std::vector<int>& token_ids);

  Parameter& word_embedding() { return word_emb_; }
  Parameter& position_embedding() { return pos_emb_; }
  std::vector<Layer>& layers() { return layers_; }

  void for_each_param(const std::function<void(Parameter&)>& fn);

  // Attention sub-block reused by the argument extractor: multi-head
  // attention, then feed-forward, each with residual + layer norm.
  static Var transformer_block(Tape& t, Var x, Layer& layer, int num_heads,
                               LoraExpertPool* pool = nullptr, int site_layer = -1,
                               const LoraExpertPool::TapeGate* gate = nullptr);

  static Layer make_layer(const std::string& prefix, ParamGroup group,
                          int hidden, int ffn_inner, Rng& rng);

 private:
  EncoderConfig cfg_;
  Parameter word_emb_;  // [vocab x d]
  Parameter pos_emb_;   // [max_len x d]
  std::vector<Layer> layers_;

  std::vector<int> with_marker(const std::vector<int>& token_ids) const;
};

}  // namespace oie
