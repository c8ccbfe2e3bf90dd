#pragma once

// Simultaneous message-passing fabric: players each hold one i.i.d. sample, send one l-bit
// message, and a referee decides from the messages (plus the shared coins in public-coin mode).

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smpsim/errors.hpp"
#include "smpsim/pmf.hpp"
#include "smpsim/rng.hpp"

namespace smpsim {

using Message = std::uint32_t;

enum class CoinMode { private_coins, public_coins, pairwise };

inline std::string to_string(CoinMode m) {
  switch (m) {
    case CoinMode::private_coins: return "private";
    case CoinMode::public_coins: return "public";
    case CoinMode::pairwise: return "pairwise";
  }
  return "?";
}

struct ProtocolConfig {
  std::size_t k = 2;
  unsigned ell = 1;
  std::size_t n = 1;
  CoinMode coin_mode = CoinMode::private_coins;
  std::uint64_t master_seed = 0;

  void validate() const {
    require(k >= 1, "protocol config: k must be >= 1");
    require(ell >= 1 && ell <= 30, "protocol config: ell must lie in [1, 30]");
    require(n >= 1, "protocol config: n must be >= 1");
    if (coin_mode == CoinMode::pairwise)
      throw Unsupported("protocol config: pairwise-coin protocols are not implemented");
  }

  std::uint64_t message_count() const { return std::uint64_t{1} << ell; }

  /// With 2^ell >= k each player can forward its sample verbatim.
  bool centralized() const { return message_count() >= k; }
};

// ---------------------------------------------------------------------------
// Coins. Every stream is a pure function of (master seed, role, index, nonce).

namespace stream {
inline constexpr std::uint64_t kNature = 0x4e41545552450000ULL;
inline constexpr std::uint64_t kPrivate = 0x5052495641544500ULL;
inline constexpr std::uint64_t kReferee = 0x5245464552454500ULL;
inline constexpr std::uint64_t kPublic = 0x5055424c49430000ULL;
}  // namespace stream

/// Private randomness of one player. Distinct (player, nonce) pairs give independent streams.
inline Rng derive_private_coins(std::uint64_t master_seed, std::uint64_t player, std::uint64_t nonce = 0) {
  return Rng(derive_seed(derive_seed(master_seed, stream::kPrivate, nonce), player));
}

/// Source of the i.i.d. sample held by a player.
inline Rng nature_stream(std::uint64_t master_seed, std::uint64_t player) {
  return Rng(derive_seed(master_seed, stream::kNature, player));
}

inline Rng referee_stream(std::uint64_t master_seed) { return Rng(derive_seed(master_seed, stream::kReferee)); }

inline std::uint64_t public_seed(std::uint64_t master_seed) { return derive_seed(master_seed, stream::kPublic); }

/// Shared randomness U. A logging bit generator: every 64-bit word drawn is recorded so a
/// transcript carries the exact public-coin record. Protocols also account the description
/// length of each public choice (ceil(log2 #choices) bits).
class PublicCoins {
 public:
  using result_type = std::uint64_t;

  explicit PublicCoins(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  static constexpr result_type min() noexcept { return Rng::min(); }
  static constexpr result_type max() noexcept { return Rng::max(); }

  result_type operator()() {
    const auto w = rng_();
    if (logging_) log_.push_back(w);
    ++words_;
    return w;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t words_drawn() const noexcept { return words_; }
  const std::vector<std::uint64_t>& log() const noexcept { return log_; }
  void set_logging(bool on) noexcept { logging_ = on; }

  void account_choice_bits(double bits) { described_bits_ += bits; }
  double described_bits() const noexcept { return described_bits_; }

  /// A fresh copy positioned at the start of the stream, as the referee sees it.
  PublicCoins replay() const {
    PublicCoins c(seed_);
    c.logging_ = logging_;
    return c;
  }

 private:
  std::uint64_t seed_;
  Rng rng_;
  std::uint64_t words_ = 0;
  bool logging_ = true;
  std::vector<std::uint64_t> log_;
  double described_bits_ = 0.0;
};

// ---------------------------------------------------------------------------
// Channels

/// A player's (possibly randomized) channel W: [k] -> {0, ..., 2^ell - 1}.
class MessageMap {
 public:
  MessageMap(std::size_t k, unsigned ell, std::vector<std::vector<double>> rows)
      : k_(k), ell_(ell), rows_(std::move(rows)) {
    require(ell_ >= 1 && ell_ <= 16, "message map: ell must lie in [1, 16]");
    require(rows_.size() == k_, "message map: need one row per symbol");
    for (const auto& row : rows_) {
      require(row.size() == (std::size_t{1} << ell_), "message map: row length must be 2^ell");
      double s = 0.0;
      for (double v : row) {
        require(v >= 0.0, "message map: negative probability");
        s += v;
      }
      require(std::abs(s - 1.0) <= kPmfTolerance, "message map: row does not sum to 1");
    }
  }

  /// Deterministic map x -> messages[x].
  static MessageMap deterministic(std::size_t k, unsigned ell, std::span<const Message> messages) {
    require(messages.size() == k, "message map: need one message per symbol");
    std::vector<std::vector<double>> rows(k, std::vector<double>(std::size_t{1} << ell, 0.0));
    for (std::size_t x = 0; x < k; ++x) {
      if (messages[x] >= (std::size_t{1} << ell)) throw ProtocolViolation("message map: message exceeds ell bits");
      rows[x][messages[x]] = 1.0;
    }
    return MessageMap(k, ell, std::move(rows));
  }

  std::size_t k() const noexcept { return k_; }
  unsigned ell() const noexcept { return ell_; }
  std::size_t message_count() const noexcept { return std::size_t{1} << ell_; }
  double prob(Message m, Symbol x) const { return rows_[x][m]; }
  const std::vector<double>& row(Symbol x) const { return rows_[x]; }

  bool is_deterministic() const {
    for (const auto& row : rows_)
      for (double v : row)
        if (v != 0.0 && v != 1.0) return false;
    return true;
  }

  /// Message of a deterministic map.
  Message deterministic_message(Symbol x) const {
    const auto& row = rows_[x];
    for (std::size_t m = 0; m < row.size(); ++m)
      if (row[m] == 1.0) return static_cast<Message>(m);
    throw InvalidArgument("message map: row is not a point mass");
  }

  template <class G>
  Message emit(Symbol x, G& g) const {
    const auto& row = rows_[x];
    double u = uniform01(g);
    for (std::size_t m = 0; m + 1 < row.size(); ++m) {
      if (u < row[m]) return static_cast<Message>(m);
      u -= row[m];
    }
    return static_cast<Message>(row.size() - 1);
  }

  /// Law of the message when the input is drawn from p.
  std::vector<double> output_law(const Pmf& p) const {
    require(p.k() == k_, "message map: pmf alphabet mismatch");
    std::vector<double> out(message_count(), 0.0);
    for (std::size_t x = 0; x < k_; ++x)
      for (std::size_t m = 0; m < out.size(); ++m) out[m] += p[x] * rows_[x][m];
    return out;
  }

 private:
  std::size_t k_;
  unsigned ell_;
  std::vector<std::vector<double>> rows_;
};

// ---------------------------------------------------------------------------
// Sample sources

/// What each player observes. Players draw x ~ raw from their nature stream and, when a channel
/// is present, pass it through that channel with their private coins (e.g. the identity-to-
/// uniformity map). `law` is the exact law of the observed symbol; count-level engines use it.
struct Source {
  Pmf raw;
  Pmf law;
  std::function<Symbol(Symbol, Rng&)> channel;

  static Source direct(Pmf p) {
    Source s{p, p, {}};
    return s;
  }

  std::size_t k() const { return law.k(); }
};

// ---------------------------------------------------------------------------
// Verdicts and transcripts

// estimate: a learned pmf is attached to the result that carries the verdict.
enum class Decision { accept_uniform, reject, abort, symbol, inconclusive, estimate };

inline std::string to_string(Decision d) {
  switch (d) {
    case Decision::accept_uniform: return "accept";
    case Decision::reject: return "reject";
    case Decision::abort: return "abort";
    case Decision::symbol: return "symbol";
    case Decision::inconclusive: return "inconclusive";
    case Decision::estimate: return "estimate";
  }
  return "?";
}

inline Decision decision_from_string(const std::string& s) {
  for (auto d : {Decision::accept_uniform, Decision::reject, Decision::abort, Decision::symbol, Decision::inconclusive,
                 Decision::estimate})
    if (to_string(d) == s) return d;
  throw InvalidArgument("unknown decision '" + s + "'");
}

struct Verdict {
  Decision decision = Decision::abort;
  Symbol symbol = 0;  // meaningful only for Decision::symbol
  std::vector<std::pair<std::string, double>> diagnostics;

  static Verdict accept() { return {Decision::accept_uniform, 0, {}}; }
  static Verdict reject() { return {Decision::reject, 0, {}}; }
  static Verdict abort() { return {Decision::abort, 0, {}}; }
  static Verdict declare(Symbol x) { return {Decision::symbol, x, {}}; }
  static Verdict inconclusive() { return {Decision::inconclusive, 0, {}}; }

  Verdict& note(std::string key, double value) {
    diagnostics.emplace_back(std::move(key), value);
    return *this;
  }

  std::optional<double> diagnostic(std::string_view key) const {
    for (const auto& [k, v] : diagnostics)
      if (k == key) return v;
    return std::nullopt;
  }

  bool accepted() const { return decision == Decision::accept_uniform; }
  bool rejected() const { return decision == Decision::reject; }
};

struct PublicCoinRecord {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> words;
  double described_bits = 0.0;
};

struct Transcript {
  unsigned ell = 1;
  std::vector<Message> messages;
  std::optional<PublicCoinRecord> public_coins;
  std::uint64_t players_consumed = 0;
};

inline void to_json(nlohmann::json& j, const Verdict& v) {
  j = nlohmann::json{{"decision", to_string(v.decision)}};
  if (v.decision == Decision::symbol) j["symbol"] = v.symbol;
  auto diag = nlohmann::json::array();
  for (const auto& [k, x] : v.diagnostics) diag.push_back({k, x});
  j["diagnostics"] = diag;
}

inline void from_json(const nlohmann::json& j, Verdict& v) {
  v.decision = decision_from_string(j.at("decision").get<std::string>());
  v.symbol = j.value("symbol", Symbol{0});
  v.diagnostics.clear();
  if (j.contains("diagnostics"))
    for (const auto& e : j.at("diagnostics")) v.diagnostics.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
}

inline void to_json(nlohmann::json& j, const Transcript& t) {
  j = nlohmann::json{{"ell", t.ell}, {"messages", t.messages}, {"players_consumed", t.players_consumed}};
  if (t.public_coins) {
    j["public_coins"] = {{"seed", t.public_coins->seed},
                         {"words", t.public_coins->words},
                         {"described_bits", t.public_coins->described_bits}};
  } else {
    j["public_coins"] = nullptr;
  }
}

inline void from_json(const nlohmann::json& j, Transcript& t) {
  t.ell = j.at("ell").get<unsigned>();
  t.messages = j.at("messages").get<std::vector<Message>>();
  t.players_consumed = j.at("players_consumed").get<std::uint64_t>();
  if (j.at("public_coins").is_null()) {
    t.public_coins.reset();
  } else {
    const auto& pc = j.at("public_coins");
    t.public_coins = PublicCoinRecord{pc.at("seed").get<std::uint64_t>(), pc.at("words").get<std::vector<std::uint64_t>>(),
                                      pc.at("described_bits").get<double>()};
  }
}

/// One trial per line: {"trial": i, "transcript": {...}, "verdict": {...}}.
inline std::string transcript_record(std::size_t trial, const Transcript& t, const Verdict& v) {
  nlohmann::json j{{"trial", trial}, {"transcript", t}, {"verdict", v}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// Execution

/// Player strategy: (player index, observed symbol, private coins) -> message.
using Strategy = std::function<Message(std::size_t, Symbol, Rng&)>;

/// Builds the strategies. Receives the public coins in public mode and nullptr in private mode.
using StrategyFactory = std::function<Strategy(PublicCoins*)>;

/// Referee: (messages, public coins or nullptr, referee's own coins) -> verdict. In private mode
/// the coins argument is always nullptr, so the decision can depend on the messages only.
using Referee = std::function<Verdict(std::span<const Message>, PublicCoins*, Rng&)>;

struct SmpResult {
  Verdict verdict;
  Transcript transcript;
};

/// The symbol observed by player i of a run seeded with master_seed.
inline Symbol observe(const Source& src, const Sampler& sampler, std::uint64_t master_seed, std::uint64_t player,
                      Rng& private_coins) {
  Rng nature = nature_stream(master_seed, player);
  const Symbol x = sampler(nature);
  return src.channel ? src.channel(x, private_coins) : x;
}

/// Runs one SMP execution with cfg.n players.
inline SmpResult run_smp(const ProtocolConfig& cfg, const StrategyFactory& make_strategy, const Referee& referee,
                         const Source& src) {
  cfg.validate();
  require(src.k() == cfg.k, "run_smp: source alphabet does not match the config");
  const bool is_public = cfg.coin_mode == CoinMode::public_coins;

  std::optional<PublicCoins> player_coins;
  if (is_public) player_coins.emplace(public_seed(cfg.master_seed));
  const Strategy strategy = make_strategy(is_public ? &*player_coins : nullptr);

  const Sampler sampler(src.raw);
  const std::uint64_t limit = cfg.message_count();
  Transcript t;
  t.ell = cfg.ell;
  t.messages.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Rng priv = derive_private_coins(cfg.master_seed, i);
    const Symbol x = observe(src, sampler, cfg.master_seed, i, priv);
    const Message m = strategy(i, x, priv);
    if (m >= limit)
      throw ProtocolViolation("player " + std::to_string(i) + " sent message " + std::to_string(m) + " which needs more than " +
                              std::to_string(cfg.ell) + " bits");
    t.messages[i] = m;
  }
  t.players_consumed = cfg.n;

  Rng ref_rng = referee_stream(cfg.master_seed);
  std::optional<PublicCoins> referee_coins;
  if (is_public) {
    referee_coins.emplace(player_coins->replay());
    t.public_coins = PublicCoinRecord{player_coins->seed(), player_coins->log(), player_coins->described_bits()};
  }
  Verdict v = referee(t.messages, is_public ? &*referee_coins : nullptr, ref_rng);
  return {std::move(v), std::move(t)};
}

/// Re-runs the referee on a stored transcript.
inline Verdict replay(const Transcript& t, const Referee& referee, std::uint64_t master_seed) {
  Rng ref_rng = referee_stream(master_seed);
  if (t.public_coins) {
    PublicCoins coins(t.public_coins->seed);
    return referee(t.messages, &coins, ref_rng);
  }
  return referee(t.messages, nullptr, ref_rng);
}

/// Lazy, unbounded sequence of players for Las Vegas protocols. Player i observes the same
/// symbol it would in run_smp with the same master seed.
class PlayerStream {
 public:
  static constexpr std::uint64_t kDefaultCap = 1'000'000;

  PlayerStream(const Source& src, std::uint64_t master_seed, std::uint64_t cap = kDefaultCap)
      : src_(&src), sampler_(src.raw), seed_(master_seed), cap_(cap) {}

  struct Player {
    std::uint64_t index;
    Symbol x;
    Rng coins;
  };

  Player next() {
    if (next_ >= cap_)
      throw PlayerCapExceeded("Las Vegas run exceeded the cap of " + std::to_string(cap_) + " players");
    const std::uint64_t i = next_++;
    Rng priv = derive_private_coins(seed_, i);
    const Symbol x = observe(*src_, sampler_, seed_, i, priv);
    return {i, x, priv};
  }

  std::uint64_t consumed() const noexcept { return next_; }
  std::uint64_t cap() const noexcept { return cap_; }

 private:
  const Source* src_;
  Sampler sampler_;
  std::uint64_t seed_;
  std::uint64_t cap_;
  std::uint64_t next_ = 0;
};

}  // namespace smpsim
