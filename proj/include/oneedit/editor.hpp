#pragma once

// Simulated parametric knowledge store and keyed edit cache.
//
// The model state is always base + sum(active deltas). Every delta is a
// self-contained record of signed score changes, including any collateral
// noise injected at edit time, so subtracting it restores the prior scores
// exactly.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>
#include <json.hpp>

#include "oneedit/kg.hpp"

namespace oneedit {

using Rational = mpq_class;

// Parses "0.25", "-3", "1/3" or "1e-2" exactly.
Rational parse_rational(std::string_view text);
std::string to_string(const Rational& q);

// Lexicographic (priority, weight). Codebook overrides live in the priority
// component; everything else has priority 0.
struct Score {
    std::int64_t priority = 0;
    Rational weight = 0;

    Score& operator+=(const Score& o);
    Score& operator-=(const Score& o);
    Score operator-() const;

    bool is_zero() const { return priority == 0 && weight == 0; }
    bool is_positive() const { return priority > 0 || (priority == 0 && weight > 0); }

    friend bool operator==(const Score& a, const Score& b) {
        return a.priority == b.priority && a.weight == b.weight;
    }
    friend std::strong_ordering operator<=>(const Score& a, const Score& b);
};

nlohmann::json to_json(const Score& s);
Score score_from_json(const nlohmann::json& j);

struct QueryKey {
    std::string subject;
    std::string relation;

    auto operator<=>(const QueryKey&) const = default;
    bool operator==(const QueryKey&) const = default;
};

using AnswerScores = std::map<std::string, Score>;
using ScoreTable = std::map<QueryKey, AnswerScores>;

struct Answer {
    std::string answer;
    Score score;
    bool operator==(const Answer&) const = default;
};

// Highest score wins, ties go to the lexicographically smallest answer;
// nullopt when no answer has a positive score.
std::optional<Answer> top_answer(const AnswerScores& answers);

enum class Backend { Direct, Codebook };

std::string_view to_string(Backend b);
Backend backend_from_string(std::string_view s);

struct ModelConfig {
    Backend backend = Backend::Direct;
    Rational residual{1, 2};        // fraction of the superseded top weight that survives
    Rational locality_noise{1, 10};  // magnitude of a collateral perturbation
    double noise_rate = 0.2;         // per-edit perturbation probability
    double noise_batch_scale = 0.02;  // added rate per extra triple in one batch
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

struct EditKey {
    std::uint64_t seq = 0;
    std::uint64_t digest = 0;

    std::string str() const;
    static std::optional<EditKey> parse(std::string_view text);

    auto operator<=>(const EditKey&) const = default;
    bool operator==(const EditKey&) const = default;
};

std::uint64_t triple_digest(const Triple& t, std::string_view user);

struct Adjustment {
    QueryKey key;
    std::string answer;
    Score change;

    bool operator==(const Adjustment&) const = default;
};

struct EditDelta {
    EditKey key;
    Backend backend = Backend::Direct;
    std::vector<Adjustment> adjustments;
    std::vector<Adjustment> noise;

    bool operator==(const EditDelta&) const = default;
};

nlohmann::json to_json(const EditDelta& d);
EditDelta delta_from_json(const nlohmann::json& j);

enum class EditStatus { Active, RolledBack };

struct CacheEntry {
    EditKey key;
    EditDelta delta;
    Triple triple;
    std::string user;
    std::uint64_t timestamp = 0;
    std::uint64_t plan_id = 0;
    std::uint64_t rng_draws = 0;  // model RNG position right after this edit
    EditStatus status = EditStatus::Active;
    std::optional<std::uint64_t> rolled_back_at;

    bool operator==(const CacheEntry&) const = default;
};

class EditCache {
public:
    std::uint64_t next_seq() const { return entries_.size() + 1; }
    std::uint64_t tick() { return ++clock_; }

    const CacheEntry& append(CacheEntry entry);
    void mark_rolled_back(const EditKey& key);

    const CacheEntry* find(const EditKey& key) const;
    std::optional<EditKey> active_key_for(const Triple& t) const;
    std::vector<const CacheEntry*> active_entries() const;
    const std::vector<CacheEntry>& entries() const { return entries_; }

    bool index_consistent() const;

    // One JSON record per log event ("edit" or "rollback"), in event order.
    void write_log(std::ostream& out) const;
    std::vector<nlohmann::json> log_records() const;

    bool operator==(const EditCache& o) const {
        return entries_ == o.entries_ && clock_ == o.clock_;
    }

private:
    std::vector<CacheEntry> entries_;
    std::map<Triple, EditKey> active_index_;
    std::uint64_t clock_ = 0;
};

class SimulatedModel {
public:
    SimulatedModel() = default;
    SimulatedModel(ModelConfig config, ScoreTable base);

    const ModelConfig& config() const { return config_; }
    const ScoreTable& base() const { return base_; }
    const ScoreTable& scores() const { return scores_; }
    const std::vector<EditKey>& active() const { return active_; }

    std::optional<Answer> query(std::string_view subject, std::string_view relation) const;
    std::optional<Score> score_of(const QueryKey& key, std::string_view answer) const;

    // Adds / subtracts a delta and tracks it in the active list.
    void apply(const EditDelta& delta);
    void subtract(const EditDelta& delta);

    // base + sum of the given deltas, from scratch.
    ScoreTable recompute(const std::vector<const EditDelta*>& deltas) const;

    std::uint64_t draw();
    std::uint64_t rng_draws() const { return draws_; }
    // Re-seeds and skips ahead so that exactly `draws` values were consumed.
    void seek_rng(std::uint64_t draws);

    bool operator==(const SimulatedModel& o) const {
        return config_ == o.config_ && base_ == o.base_ && scores_ == o.scores_ &&
               active_ == o.active_ && rng_ == o.rng_ && draws_ == o.draws_;
    }

private:
    ModelConfig config_;
    ScoreTable base_;
    ScoreTable scores_;
    std::vector<EditKey> active_;
    std::mt19937_64 rng_;
    std::uint64_t draws_ = 0;
};

void add_scores(ScoreTable& table, const std::vector<Adjustment>& adjustments, int sign);
void normalize(ScoreTable& table);

struct EditOptions {
    std::string user = "anonymous";
    std::size_t batch_size = 1;
    std::uint64_t plan_id = 0;
};

// Builds a delta for the model's backend, applies it and records an Active
// cache entry.
EditKey edit(SimulatedModel& m, EditCache& cache, const Triple& t, const EditOptions& opts = {});

// Subtracts the cached delta exactly. Throws KeyNotActive.
void rollback(SimulatedModel& m, EditCache& cache, const EditKey& key);

std::optional<Answer> query(const SimulatedModel& m, std::string_view subject,
                            std::string_view relation);

using ModelSnapshot = SimulatedModel;
inline ModelSnapshot snapshot(const SimulatedModel& m) { return m; }
inline SimulatedModel restore(const ModelSnapshot& s) { return s; }

// Base score file: one {"s","r","answers":{"<answer>":"<weight>"}} per line.
ScoreTable read_score_table(std::istream& in);
void write_score_table(std::ostream& out, const ScoreTable& table);

// Rebuilds model and cache from a cache log over the given base model.
struct Replayed {
    SimulatedModel model;
    EditCache cache;
};
Replayed replay_cache_log(const SimulatedModel& base, std::istream& log);

}  // namespace oneedit
