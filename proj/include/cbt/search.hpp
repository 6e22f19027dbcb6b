#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cbt/model_config.hpp"
#include "cbt/parameters.hpp"
#include "cbt/transformer.hpp"

namespace cbt {

enum class LengthNorm { kNone, kAverage };

LengthNorm parse_length_norm(const std::string& name);
std::string to_string(LengthNorm n);

struct DecodeConfig {
  std::size_t total_beam = 4;  // split evenly between the flows
  std::size_t max_len = kMaxCaptionTokens + 1;  // generated tokens, eos included
  LengthNorm length_norm = LengthNorm::kNone;

  std::size_t per_flow_width() const { return total_beam / 2; }

  /// Throws ConfigError for an odd or zero beam or a zero max_len.
  void validate() const;
};

struct Hypothesis {
  Flow flow = Flow::kL2R;
  IdSeq tokens;  // flow order; ends in eos unless cut at max_len
  std::vector<double> logprobs;
  double logprob = 0.0;
  bool finished = false;
  std::size_t rank = 0;

  double score(LengthNorm norm) const;

  /// Content tokens in forward word order (eos dropped, R2L un-reversed).
  IdSeq caption() const;
};

struct EnsembleMember {
  const ParameterSet* params = nullptr;
  ModelConfig config;
};

/// M models decoded in lockstep. Each step's next-token distribution is the
/// arithmetic mean of the members' softmax outputs; one member is plain
/// single-model decoding.
class Ensemble {
 public:
  explicit Ensemble(std::vector<EnsembleMember> members);
  static Ensemble single(const ParameterSet& params, const ModelConfig& config);

  std::size_t size() const { return members_.size(); }
  std::size_t vocab_size() const { return members_.front().config.vocab_size; }
  std::size_t max_positions() const;
  const std::vector<EnsembleMember>& members() const { return members_; }

  using State = std::vector<IncrementalState>;  // one per member

  struct Step {
    State state;
    std::vector<double> fwd_probs;  // empty for a flow that did not advance
    std::vector<double> bwd_probs;
  };

  std::vector<ContextCache> contexts(const Tensor& features) const;
  State initial_state() const;
  Step step(const std::vector<ContextCache>& ctx, State state, std::optional<int> fwd_token,
            std::optional<int> bwd_token) const;

 private:
  std::vector<EnsembleMember> members_;
};

struct BeamResult {
  std::vector<Hypothesis> fwd;  // finished hypotheses, best first
  std::vector<Hypothesis> bwd;
};

/// Flow-split beam search. Each flow keeps total_beam / 2 beams; finished
/// hypotheses leave the beam and their slots are not refilled. Both flows
/// advance in lockstep and the beam of rank r in one flow takes the beam of
/// rank r in the other as its cross-flow context. A surplus beam pairs with
/// the other flow's last active beam, or with its best finished hypothesis
/// (frozen) once that flow has no active beams. Pad is never generated.
BeamResult beam_search_bidir(const Ensemble& model, const Tensor& features, const DecodeConfig& config);

struct GreedyResult {
  Hypothesis fwd;
  Hypothesis bwd;
};

/// Beam search with one beam per flow.
GreedyResult greedy_decode(const Ensemble& model, const Tensor& features,
                           std::size_t max_len = kMaxCaptionTokens + 1);

struct Selection {
  IdSeq caption;  // forward word order
  Flow flow = Flow::kL2R;
  double fwd_score = 0.0;
  double bwd_score = 0.0;

  double score() const { return flow == Flow::kL2R ? fwd_score : bwd_score; }
};

/// Picks the higher-scoring flow; ties go to L2R.
Selection sentence_level_ensemble(const Hypothesis& fwd, const Hypothesis& bwd, LengthNorm norm);

}  // namespace cbt
