#include "oneedit/editor.hpp"
#include "oneedit/kg_io.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <istream>
#include <ostream>

namespace oneedit {

using nlohmann::json;

// --- rationals and scores --------------------------------------------------

Rational parse_rational(std::string_view raw) {
    std::string text = canonicalize(raw);
    if (text.empty()) throw Error(ErrorCode::Parse, "empty number");
    try {
        if (text.find('/') != std::string::npos) {
            Rational q(text, 10);
            q.canonicalize();
            return q;
        }
        bool negative = false;
        std::size_t i = 0;
        if (text[i] == '+' || text[i] == '-') negative = text[i++] == '-';
        std::string digits;
        long exponent = 0;
        bool seen_point = false;
        for (; i < text.size() && text[i] != 'e' && text[i] != 'E'; ++i) {
            char c = text[i];
            if (c == '.' && !seen_point) {
                seen_point = true;
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                digits.push_back(c);
                if (seen_point) --exponent;
            } else {
                throw Error(ErrorCode::Parse, "not a number: " + text);
            }
        }
        if (i < text.size()) exponent += std::stol(text.substr(i + 1));
        if (digits.empty()) throw Error(ErrorCode::Parse, "not a number: " + text);
        mpz_class mantissa(digits, 10);
        mpz_class scale;
        mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(exponent)));
        Rational q = exponent >= 0 ? Rational(mantissa * scale) : Rational(mantissa, scale);
        q.canonicalize();
        return negative ? Rational(-q) : q;
    } catch (const std::invalid_argument&) {
        throw Error(ErrorCode::Parse, "not a number: " + text);
    }
}

std::string to_string(const Rational& q) { return q.get_str(10); }

Score& Score::operator+=(const Score& o) {
    priority += o.priority;
    weight += o.weight;
    return *this;
}

Score& Score::operator-=(const Score& o) {
    priority -= o.priority;
    weight -= o.weight;
    return *this;
}

Score Score::operator-() const { return Score{-priority, Rational(-weight)}; }

std::strong_ordering operator<=>(const Score& a, const Score& b) {
    if (a.priority != b.priority) return a.priority <=> b.priority;
    int c = cmp(a.weight, b.weight);
    return c < 0 ? std::strong_ordering::less
                 : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
}

json to_json(const Score& s) { return json{{"priority", s.priority}, {"weight", to_string(s.weight)}}; }

Score score_from_json(const json& j) {
    if (j.is_string()) return Score{0, parse_rational(j.get<std::string>())};
    return Score{j.value("priority", std::int64_t{0}), parse_rational(j.at("weight").get<std::string>())};
}

std::optional<Answer> top_answer(const AnswerScores& answers) {
    const std::pair<const std::string, Score>* best = nullptr;
    for (const auto& entry : answers) {
        if (!entry.second.is_positive()) continue;
        if (!best || entry.second > best->second) best = &entry;
    }
    if (!best) return std::nullopt;
    return Answer{best->first, best->second};
}

std::string_view to_string(Backend b) { return b == Backend::Direct ? "direct" : "codebook"; }

Backend backend_from_string(std::string_view s) {
    if (s == "direct") return Backend::Direct;
    if (s == "codebook") return Backend::Codebook;
    throw Error(ErrorCode::Parse, "unknown backend: " + std::string(s));
}

// --- keys ------------------------------------------------------------------

std::string EditKey::str() const {
    char buf[48];
    std::snprintf(buf, sizeof buf, "k%06" PRIu64 "-%016" PRIx64, seq, digest);
    return buf;
}

std::optional<EditKey> EditKey::parse(std::string_view text) {
    if (text.size() < 4 || text[0] != 'k') return std::nullopt;
    auto dash = text.find('-');
    if (dash == std::string_view::npos || dash < 2 || text.size() - dash - 1 != 16) return std::nullopt;
    EditKey key;
    for (char c : text.substr(1, dash - 1)) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        key.seq = key.seq * 10 + static_cast<std::uint64_t>(c - '0');
    }
    for (char c : text.substr(dash + 1)) {
        int v;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
        else return std::nullopt;
        key.digest = (key.digest << 4) | static_cast<std::uint64_t>(v);
    }
    return key;
}

std::uint64_t triple_digest(const Triple& t, std::string_view user) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ULL;
    };
    mix(t.subject);
    mix(t.relation);
    mix(t.object);
    mix(user);
    return h;
}

// --- deltas ----------------------------------------------------------------

namespace {

json adjustments_json(const std::vector<Adjustment>& list) {
    json out = json::array();
    for (const auto& a : list) {
        out.push_back({{"s", a.key.subject}, {"r", a.key.relation}, {"answer", a.answer},
                       {"change", to_json(a.change)}});
    }
    return out;
}

std::vector<Adjustment> adjustments_from_json(const json& j) {
    std::vector<Adjustment> out;
    for (const auto& a : j) {
        out.push_back({{a.at("s").get<std::string>(), a.at("r").get<std::string>()},
                       a.at("answer").get<std::string>(), score_from_json(a.at("change"))});
    }
    return out;
}

EditKey key_from_json(const json& j) {
    auto key = EditKey::parse(j.get<std::string>());
    if (!key) throw Error(ErrorCode::Parse, "bad edit key " + j.dump());
    return *key;
}

}  // namespace

json to_json(const EditDelta& d) {
    return json{{"key", d.key.str()},
                {"backend", to_string(d.backend)},
                {"adjustments", adjustments_json(d.adjustments)},
                {"noise", adjustments_json(d.noise)}};
}

EditDelta delta_from_json(const json& j) {
    return EditDelta{key_from_json(j.at("key")),
                     backend_from_string(j.at("backend").get<std::string>()),
                     adjustments_from_json(j.at("adjustments")), adjustments_from_json(j.at("noise"))};
}

// --- cache -----------------------------------------------------------------

const CacheEntry& EditCache::append(CacheEntry entry) {
    entries_.push_back(std::move(entry));
    const auto& e = entries_.back();
    if (e.status == EditStatus::Active) active_index_[e.triple] = e.key;
    return e;
}

const CacheEntry* EditCache::find(const EditKey& key) const {
    if (key.seq == 0 || key.seq > entries_.size()) return nullptr;
    const auto& e = entries_[key.seq - 1];
    return e.key == key ? &e : nullptr;
}

void EditCache::mark_rolled_back(const EditKey& key) {
    const auto* found = find(key);
    if (!found || found->status != EditStatus::Active) {
        throw Error(ErrorCode::KeyNotActive, key.str());
    }
    auto& e = entries_[key.seq - 1];
    e.status = EditStatus::RolledBack;
    e.rolled_back_at = tick();

    auto it = active_index_.find(e.triple);
    if (it != active_index_.end() && it->second == key) {
        active_index_.erase(it);
        for (auto r = entries_.rbegin(); r != entries_.rend(); ++r) {
            if (r->status == EditStatus::Active && r->triple == e.triple) {
                active_index_[e.triple] = r->key;
                break;
            }
        }
    }
}

std::optional<EditKey> EditCache::active_key_for(const Triple& t) const {
    auto it = active_index_.find(t);
    if (it == active_index_.end()) return std::nullopt;
    return it->second;
}

std::vector<const CacheEntry*> EditCache::active_entries() const {
    std::vector<const CacheEntry*> out;
    for (const auto& e : entries_) {
        if (e.status == EditStatus::Active) out.push_back(&e);
    }
    return out;
}

bool EditCache::index_consistent() const {
    std::map<Triple, EditKey> rebuilt;
    for (const auto& e : entries_) {
        if (e.status == EditStatus::Active) rebuilt[e.triple] = e.key;
    }
    return rebuilt == active_index_;
}

std::vector<json> EditCache::log_records() const {
    std::vector<std::pair<std::uint64_t, json>> events;
    for (const auto& e : entries_) {
        events.emplace_back(e.timestamp, json{{"type", "edit"},
                                              {"key", e.key.str()},
                                              {"ts", e.timestamp},
                                              {"user", e.user},
                                              {"plan", e.plan_id},
                                              {"rngDraws", e.rng_draws},
                                              {"triple", to_json(e.triple)},
                                              {"delta", to_json(e.delta)}});
        if (e.rolled_back_at) {
            events.emplace_back(*e.rolled_back_at,
                                json{{"type", "rollback"}, {"key", e.key.str()}, {"ts", *e.rolled_back_at}});
        }
    }
    std::sort(events.begin(), events.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<json> out;
    out.reserve(events.size());
    for (auto& [ts, j] : events) out.push_back(std::move(j));
    return out;
}

void EditCache::write_log(std::ostream& out) const {
    for (const auto& rec : log_records()) out << rec.dump() << '\n';
}

// --- model -----------------------------------------------------------------

void add_scores(ScoreTable& table, const std::vector<Adjustment>& adjustments, int sign) {
    for (const auto& a : adjustments) {
        auto& answers = table[a.key];
        auto& score = answers[a.answer];
        if (sign > 0) score += a.change;
        else score -= a.change;
        if (score.is_zero()) {
            answers.erase(a.answer);
            if (answers.empty()) table.erase(a.key);
        }
    }
}

void normalize(ScoreTable& table) {
    for (auto it = table.begin(); it != table.end();) {
        std::erase_if(it->second, [](const auto& kv) { return kv.second.is_zero(); });
        it = it->second.empty() ? table.erase(it) : std::next(it);
    }
}

SimulatedModel::SimulatedModel(ModelConfig config, ScoreTable base)
    : config_(std::move(config)), base_(std::move(base)), rng_(config_.seed) {
    normalize(base_);
    scores_ = base_;
}

std::optional<Answer> SimulatedModel::query(std::string_view subject,
                                            std::string_view relation) const {
    auto it = scores_.find(QueryKey{std::string(subject), std::string(relation)});
    if (it == scores_.end()) return std::nullopt;
    return top_answer(it->second);
}

std::optional<Score> SimulatedModel::score_of(const QueryKey& key, std::string_view answer) const {
    auto it = scores_.find(key);
    if (it == scores_.end()) return std::nullopt;
    auto a = it->second.find(std::string(answer));
    if (a == it->second.end()) return std::nullopt;
    return a->second;
}

void SimulatedModel::apply(const EditDelta& delta) {
    add_scores(scores_, delta.adjustments, +1);
    add_scores(scores_, delta.noise, +1);
    active_.push_back(delta.key);
}

void SimulatedModel::subtract(const EditDelta& delta) {
    add_scores(scores_, delta.adjustments, -1);
    add_scores(scores_, delta.noise, -1);
    std::erase(active_, delta.key);
}

ScoreTable SimulatedModel::recompute(const std::vector<const EditDelta*>& deltas) const {
    ScoreTable table = base_;
    for (const auto* d : deltas) {
        for (const auto* list : {&d->adjustments, &d->noise}) {
            for (const auto& a : *list) table[a.key][a.answer] += a.change;
        }
    }
    normalize(table);
    return table;
}

std::uint64_t SimulatedModel::draw() {
    ++draws_;
    return rng_();
}

void SimulatedModel::seek_rng(std::uint64_t draws) {
    rng_.seed(config_.seed);
    rng_.discard(draws);
    draws_ = draws;
}

// --- editor operations -----------------------------------------------------

namespace {

double unit_interval(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

void add_direct_noise(SimulatedModel& m, const QueryKey& edited, std::size_t batch_size,
                      EditDelta& delta) {
    const auto& cfg = m.config();
    double rate = cfg.noise_rate +
                  cfg.noise_batch_scale * static_cast<double>(batch_size > 0 ? batch_size - 1 : 0);
    rate = std::clamp(rate, 0.0, 1.0);
    if (unit_interval(m.draw()) >= rate) return;

    std::vector<const QueryKey*> candidates;
    for (const auto& [key, answers] : m.scores()) {
        if (key != edited && top_answer(answers)) candidates.push_back(&key);
    }
    if (candidates.empty()) return;
    const auto& target = *candidates[m.draw() % candidates.size()];
    const bool raise = (m.draw() & 1U) != 0;
    auto top = m.query(target.subject, target.relation);
    Score change{0, raise ? cfg.locality_noise : Rational(-cfg.locality_noise)};
    delta.noise.push_back({target, top->answer, change});
}

}  // namespace

EditKey edit(SimulatedModel& m, EditCache& cache, const Triple& t, const EditOptions& opts) {
    const EditKey key{cache.next_seq(), triple_digest(t, opts.user)};
    const QueryKey qk{t.subject, t.relation};
    EditDelta delta{key, m.config().backend, {}, {}};

    if (delta.backend == Backend::Codebook) {
        // Newer overrides outrank older ones on the same prompt.
        delta.adjustments.push_back({qk, t.object, Score{static_cast<std::int64_t>(key.seq), 0}});
    } else {
        auto prior = m.query(t.subject, t.relation);
        delta.adjustments.push_back({qk, t.object, Score{0, 1}});
        if (prior && prior->answer != t.object) {
            Rational removed = (1 - m.config().residual) * prior->score.weight;
            if (removed != 0) delta.adjustments.push_back({qk, prior->answer, Score{0, -removed}});
        }
        add_direct_noise(m, qk, opts.batch_size, delta);
    }

    m.apply(delta);
    CacheEntry entry;
    entry.key = key;
    entry.delta = std::move(delta);
    entry.triple = t;
    entry.user = opts.user;
    entry.timestamp = cache.tick();
    entry.plan_id = opts.plan_id;
    entry.rng_draws = m.rng_draws();
    cache.append(std::move(entry));
    return key;
}

void rollback(SimulatedModel& m, EditCache& cache, const EditKey& key) {
    const auto* entry = cache.find(key);
    if (!entry || entry->status != EditStatus::Active) throw Error(ErrorCode::KeyNotActive, key.str());
    m.subtract(entry->delta);
    cache.mark_rolled_back(key);
}

std::optional<Answer> query(const SimulatedModel& m, std::string_view subject,
                            std::string_view relation) {
    return m.query(subject, relation);
}

// --- persistence -----------------------------------------------------------

ScoreTable read_score_table(std::istream& in) {
    ScoreTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::Parse, e.what());
        }
        QueryKey key{canonicalize(j.at("s").get<std::string>()), canonicalize(j.at("r").get<std::string>())};
        for (const auto& [answer, w] : j.at("answers").items()) {
            table[key][canonicalize(answer)] += score_from_json(w);
        }
    }
    normalize(table);
    return table;
}

void write_score_table(std::ostream& out, const ScoreTable& table) {
    for (const auto& [key, answers] : table) {
        json a = json::object();
        for (const auto& [answer, score] : answers) {
            a[answer] = score.priority == 0 ? json(to_string(score.weight)) : to_json(score);
        }
        out << json{{"s", key.subject}, {"r", key.relation}, {"answers", a}}.dump() << '\n';
    }
}

Replayed replay_cache_log(const SimulatedModel& base, std::istream& log) {
    Replayed out{SimulatedModel(base.config(), base.base()), EditCache{}};
    std::string line;
    while (std::getline(log, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::Parse, std::string("cache log: ") + e.what());
        }
        const auto type = rec.at("type").get<std::string>();
        const auto ts = rec.at("ts").get<std::uint64_t>();
        if (type == "edit") {
            CacheEntry entry;
            entry.delta = delta_from_json(rec.at("delta"));
            entry.key = key_from_json(rec.at("key"));
            if (entry.key.seq != out.cache.next_seq() || !(entry.delta.key == entry.key)) {
                throw Error(ErrorCode::Parse, "cache log out of sequence at " + entry.key.str());
            }
            entry.triple = triple_from_json(rec.at("triple"));
            entry.user = rec.at("user").get<std::string>();
            entry.plan_id = rec.at("plan").get<std::uint64_t>();
            entry.rng_draws = rec.at("rngDraws").get<std::uint64_t>();
            entry.timestamp = out.cache.tick();
            if (entry.timestamp != ts) throw Error(ErrorCode::Parse, "cache log clock mismatch");
            out.model.apply(entry.delta);
            out.model.seek_rng(entry.rng_draws);
            out.cache.append(std::move(entry));
        } else if (type == "rollback") {
            rollback(out.model, out.cache, key_from_json(rec.at("key")));
            if (out.cache.find(key_from_json(rec.at("key")))->rolled_back_at != ts) {
                throw Error(ErrorCode::Parse, "cache log clock mismatch");
            }
        } else {
            throw Error(ErrorCode::Parse, "unknown cache record type " + type);
        }
    }
    return out;
}

}  // namespace oneedit
