#include "cbt/search.hpp"

#include <algorithm>
#include <cmath>

namespace cbt {

LengthNorm parse_length_norm(const std::string& name) {
  if (name == "none") return LengthNorm::kNone;
  if (name == "average") return LengthNorm::kAverage;
  throw ConfigError("unknown length_norm '" + name + "' (expected none or average)");
}

std::string to_string(LengthNorm n) { return n == LengthNorm::kNone ? "none" : "average"; }

void DecodeConfig::validate() const {
  if (total_beam < 2 || total_beam % 2 != 0) {
    throw ConfigError("total_beam must be even and at least 2, got " + std::to_string(total_beam));
  }
  if (max_len == 0) throw ConfigError("decode max_len must be positive");
}

double Hypothesis::score(LengthNorm norm) const {
  if (norm == LengthNorm::kAverage && !tokens.empty()) return logprob / static_cast<double>(tokens.size());
  return logprob;
}

IdSeq Hypothesis::caption() const {
  IdSeq out = tokens;
  auto eos = std::find(out.begin(), out.end(), kEosId);
  out.erase(eos, out.end());
  if (flow == Flow::kR2L) std::reverse(out.begin(), out.end());
  return out;
}

Ensemble::Ensemble(std::vector<EnsembleMember> members) : members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("an ensemble needs at least one model");
  for (const auto& m : members_) {
    if (m.params == nullptr) throw ContractError("ensemble member without parameters");
    m.config.validate();
    if (m.config.vocab_size != members_.front().config.vocab_size) {
      throw ConfigError("ensemble members disagree on vocabulary size (" + std::to_string(m.config.vocab_size) +
                        " vs " + std::to_string(members_.front().config.vocab_size) + ")");
    }
    if (m.config.feature_dim != members_.front().config.feature_dim) {
      throw ConfigError("ensemble members disagree on feature_dim");
    }
  }
}

Ensemble Ensemble::single(const ParameterSet& params, const ModelConfig& config) {
  return Ensemble({EnsembleMember{&params, config}});
}

std::size_t Ensemble::max_positions() const {
  std::size_t n = members_.front().config.max_positions();
  for (const auto& m : members_) n = std::min(n, m.config.max_positions());
  return n;
}

std::vector<ContextCache> Ensemble::contexts(const Tensor& features) const {
  NoGradScope no_grad;
  std::vector<ContextCache> out;
  for (const auto& m : members_) {
    out.push_back(prepare_context(encode(features, *m.params, m.config), *m.params, m.config));
  }
  return out;
}

Ensemble::State Ensemble::initial_state() const { return State(members_.size()); }

Ensemble::Step Ensemble::step(const std::vector<ContextCache>& ctx, State state, std::optional<int> fwd_token,
                              std::optional<int> bwd_token) const {
  if (ctx.size() != members_.size() || state.size() != members_.size()) {
    throw ContractError("ensemble state does not match the member count");
  }
  Step out;
  out.state.resize(members_.size());
  auto accumulate = [](std::vector<double>& acc, const std::vector<double>& p) {
    if (acc.empty()) {
      acc = p;
    } else {
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += p[k];
    }
  };
  for (std::size_t m = 0; m < members_.size(); ++m) {
    StepOutput so = decode_step(ctx[m], std::move(state[m]), fwd_token, bwd_token, *members_[m].params,
                                members_[m].config);
    out.state[m] = std::move(so.state);
    if (fwd_token) accumulate(out.fwd_probs, so.fwd_probs);
    if (bwd_token) accumulate(out.bwd_probs, so.bwd_probs);
  }
  const double inv = static_cast<double>(members_.size());
  for (double& p : out.fwd_probs) p /= inv;
  for (double& p : out.bwd_probs) p /= inv;
  return out;
}

namespace {

using MemberCaches = std::vector<FlowCache>;

struct Beam {
  IdSeq tokens;
  std::vector<double> logprobs;
  double logprob = 0.0;
  int next_input = 0;
  MemberCaches cache;
};

struct FlowBeams {
  Flow flow;
  std::vector<Beam> active;
  std::vector<Hypothesis> finished;
  std::vector<MemberCaches> finished_cache;
};

struct Candidate {
  double logprob;
  std::size_t beam;
  int token;
  double token_logprob;
};

const MemberCaches& best_finished_cache(const FlowBeams& fb, LengthNorm norm) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < fb.finished.size(); ++i) {
    if (fb.finished[i].score(norm) > fb.finished[best].score(norm)) best = i;
  }
  return fb.finished_cache.at(best);
}

void expand(FlowBeams& fb, const std::vector<std::vector<double>>& probs, std::vector<MemberCaches>& caches,
            std::size_t width, std::size_t max_len) {
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < fb.active.size(); ++i) {
    for (std::size_t k = 0; k < probs[i].size(); ++k) {
      if (static_cast<int>(k) == kPadId || !(probs[i][k] > 0.0)) continue;
      const double lp = std::log(probs[i][k]);
      cands.push_back({fb.active[i].logprob + lp, i, static_cast<int>(k), lp});
    }
  }
  const std::size_t keep = std::min(width - std::min(width, fb.finished.size()), cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                    [](const Candidate& a, const Candidate& b) {
                      if (a.logprob != b.logprob) return a.logprob > b.logprob;
                      if (a.beam != b.beam) return a.beam < b.beam;
                      return a.token < b.token;
                    });
  std::vector<Beam> next;
  for (std::size_t c = 0; c < keep; ++c) {
    const Candidate& cand = cands[c];
    const Beam& parent = fb.active[cand.beam];
    Beam b;
    b.tokens = parent.tokens;
    b.tokens.push_back(cand.token);
    b.logprobs = parent.logprobs;
    b.logprobs.push_back(cand.token_logprob);
    b.logprob = cand.logprob;
    b.next_input = cand.token;
    b.cache = caches[cand.beam];
    if (cand.token == kEosId || b.tokens.size() >= max_len) {
      Hypothesis h;
      h.flow = fb.flow;
      h.tokens = std::move(b.tokens);
      h.logprobs = std::move(b.logprobs);
      h.logprob = b.logprob;
      h.finished = true;
      fb.finished.push_back(std::move(h));
      fb.finished_cache.push_back(std::move(b.cache));
    } else {
      next.push_back(std::move(b));
    }
  }
  fb.active = std::move(next);
}

std::vector<Hypothesis> ranked(std::vector<Hypothesis> hyps, LengthNorm norm) {
  std::stable_sort(hyps.begin(), hyps.end(),
                   [norm](const Hypothesis& a, const Hypothesis& b) { return a.score(norm) > b.score(norm); });
  for (std::size_t r = 0; r < hyps.size(); ++r) hyps[r].rank = r;
  return hyps;
}

}  // namespace

BeamResult beam_search_bidir(const Ensemble& model, const Tensor& features, const DecodeConfig& config) {
  config.validate();
  if (config.max_len > model.max_positions()) {
    throw ConfigError("decode max_len " + std::to_string(config.max_len) + " exceeds the model's " +
                      std::to_string(model.max_positions()) + " positions");
  }
  const auto ctx = model.contexts(features);
  const std::size_t M = model.size();
  const std::size_t V = model.vocab_size();
  const std::size_t W = config.per_flow_width();

  FlowBeams f{Flow::kL2R, {}, {}, {}};
  FlowBeams b{Flow::kR2L, {}, {}, {}};
  f.active.push_back({{}, {}, 0.0, l2r_id(V), MemberCaches(M)});
  b.active.push_back({{}, {}, 0.0, r2l_id(V), MemberCaches(M)});

  while (!f.active.empty() || !b.active.empty()) {
    const std::size_t nf = f.active.size(), nb = b.active.size();
    const std::size_t pairs = std::max(nf, nb);
    std::vector<std::vector<double>> fprobs(nf), bprobs(nb);
    std::vector<MemberCaches> fnext(nf), bnext(nb);
    for (std::size_t r = 0; r < pairs; ++r) {
      Ensemble::State s(M);
      std::optional<int> ft, bt;
      if (nf > 0) {
        const Beam& beam = f.active[std::min(r, nf - 1)];
        for (std::size_t m = 0; m < M; ++m) s[m].fwd = beam.cache[m];
        ft = beam.next_input;
      } else {
        const MemberCaches& frozen = best_finished_cache(f, config.length_norm);
        for (std::size_t m = 0; m < M; ++m) s[m].fwd = frozen[m];
      }
      if (nb > 0) {
        const Beam& beam = b.active[std::min(r, nb - 1)];
        for (std::size_t m = 0; m < M; ++m) s[m].bwd = beam.cache[m];
        bt = beam.next_input;
      } else {
        const MemberCaches& frozen = best_finished_cache(b, config.length_norm);
        for (std::size_t m = 0; m < M; ++m) s[m].bwd = frozen[m];
      }
      Ensemble::Step out = model.step(ctx, std::move(s), ft, bt);
      if (r < nf) {
        fprobs[r] = std::move(out.fwd_probs);
        for (std::size_t m = 0; m < M; ++m) fnext[r].push_back(out.state[m].fwd);
      }
      if (r < nb) {
        bprobs[r] = std::move(out.bwd_probs);
        for (std::size_t m = 0; m < M; ++m) bnext[r].push_back(out.state[m].bwd);
      }
    }
    if (nf > 0) expand(f, fprobs, fnext, W, config.max_len);
    if (nb > 0) expand(b, bprobs, bnext, W, config.max_len);
  }
  return {ranked(std::move(f.finished), config.length_norm), ranked(std::move(b.finished), config.length_norm)};
}

GreedyResult greedy_decode(const Ensemble& model, const Tensor& features, std::size_t max_len) {
  DecodeConfig c;
  c.total_beam = 2;
  c.max_len = max_len;
  BeamResult r = beam_search_bidir(model, features, c);
  return {r.fwd.front(), r.bwd.front()};
}

Selection sentence_level_ensemble(const Hypothesis& fwd, const Hypothesis& bwd, LengthNorm norm) {
  Selection s;
  s.fwd_score = fwd.score(norm);
  s.bwd_score = bwd.score(norm);
  s.flow = s.bwd_score > s.fwd_score ? Flow::kR2L : Flow::kL2R;
  s.caption = s.flow == Flow::kL2R ? fwd.caption() : bwd.caption();
  return s;
}

}  // namespace cbt
