#include "av/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "av/rng.hpp"

namespace av::dataprep {

using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

SplitSpec split_corpus(const std::vector<Document>& docs, const SplitRatios& ratios,
                       std::uint64_t seed) {
    std::set<std::string> author_set, fandom_set;
    for (const auto& d : docs) {
        author_set.insert(d.author_id);
        fandom_set.insert(d.fandom_id);
    }
    if (author_set.size() < 3 || fandom_set.size() < 3) {
        throw CorpusTooSmall("split_corpus: need at least 3 authors and 3 fandoms");
    }

    Rng rng(mix_seed(seed, 0x5157));
    auto counts_for = [&](std::size_t n) {
        const auto n_train = static_cast<std::size_t>(ratios.training * static_cast<double>(n));
        const auto n_cal = static_cast<std::size_t>(ratios.calibration * static_cast<double>(n));
        return std::array<std::size_t, 3>{n_train, n_cal, n - n_train - n_cal};
    };

    std::unordered_map<std::string, int> author_split;
    {
        std::vector<std::string> order(author_set.begin(), author_set.end());
        rng.shuffle(order);
        const auto q = counts_for(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            author_split[order[i]] = i < q[0] ? 0 : (i < q[0] + q[1] ? 1 : 2);
        }
    }

    // Fandoms fill the same ratio quotas, but each fandom prefers the split
    // where most of its documents' authors already live, which minimizes the
    // overlap removals (and makes them zero when authors and fandoms are in
    // one-to-one correspondence).
    std::unordered_map<std::string, int> fandom_split;
    {
        std::vector<std::string> order(fandom_set.begin(), fandom_set.end());
        rng.shuffle(order);
        auto quota = counts_for(order.size());
        std::unordered_map<std::string, std::array<long, 3>> retained;
        for (const auto& name : order) retained[name] = {0, 0, 0};
        for (const auto& d : docs) {
            retained[d.fandom_id][static_cast<std::size_t>(author_split.at(d.author_id))]++;
        }
        for (const auto& name : order) {
            int best = -1;
            for (int s = 0; s < 3; ++s) {
                if (quota[static_cast<std::size_t>(s)] == 0) continue;
                if (best < 0 ||
                    retained[name][static_cast<std::size_t>(s)] >
                        retained[name][static_cast<std::size_t>(best)] ||
                    (retained[name][static_cast<std::size_t>(s)] ==
                         retained[name][static_cast<std::size_t>(best)] &&
                     quota[static_cast<std::size_t>(s)] > quota[static_cast<std::size_t>(best)])) {
                    best = s;
                }
            }
            fandom_split[name] = best;
            --quota[static_cast<std::size_t>(best)];
        }
    }

    SplitSpec spec;
    for (const auto& d : docs) {
        const int sa = author_split.at(d.author_id);
        const int sf = fandom_split.at(d.fandom_id);
        if (sa != sf) {
            ++spec.removed;
            continue;
        }
        switch (sa) {
            case 0: spec.training.push_back(d); break;
            case 1: spec.calibration.push_back(d); break;
            default: spec.validation.push_back(d); break;
        }
    }
    return spec;
}

namespace {

bool compatible(const Document& a, const Document& b, Subset s) {
    const bool same_author = a.author_id == b.author_id;
    const bool same_fandom = a.fandom_id == b.fandom_id;
    switch (s) {
        case Subset::SA_SF: return same_author && same_fandom;
        case Subset::SA_DF: return same_author && !same_fandom;
        case Subset::DA_SF: return !same_author && same_fandom;
        case Subset::DA_DF: return !same_author && !same_fandom;
    }
    return false;
}

}  // namespace

std::vector<Trial> resample_pairs(const std::vector<Document>& docs,
                                  const PairQuotas& quotas, std::uint64_t epoch_seed) {
    std::vector<Trial> trials;
    trials.reserve(static_cast<std::size_t>(std::max(0, quotas.total())));
    const std::size_t n = docs.size();
    int trial_counter = 0;

    for (Subset subset : {Subset::SA_SF, Subset::SA_DF, Subset::DA_SF, Subset::DA_DF}) {
        const int quota = quotas.quota(subset);
        if (quota <= 0) continue;

        Rng rng(mix_seed(epoch_seed, static_cast<std::uint64_t>(subset)));

        // Eligible documents are those with at least one compatible partner.
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j && compatible(docs[i], docs[j], subset)) {
                    pool.push_back(i);
                    break;
                }
            }
        }
        if (pool.empty()) {
            throw QuotaInfeasible(std::string("resample_pairs: no ") + subset_name(subset) +
                                  " pair exists in this split");
        }

        // Random priority order fixes how usage ties break this epoch.
        std::vector<std::size_t> rank(n, 0);
        {
            std::vector<std::size_t> shuffled = pool;
            rng.shuffle(shuffled);
            for (std::size_t r = 0; r < shuffled.size(); ++r) rank[shuffled[r]] = r;
        }

        std::vector<long> uses(n, 0);
        auto better = [&](std::size_t a, std::size_t b) {
            if (uses[a] != uses[b]) return uses[a] < uses[b];
            return rank[a] < rank[b];
        };

        for (int q = 0; q < quota; ++q) {
            std::size_t best = std::numeric_limits<std::size_t>::max();
            for (std::size_t cand : pool) {
                if (best == std::numeric_limits<std::size_t>::max() || better(cand, best)) {
                    best = cand;
                }
            }
            std::size_t partner = std::numeric_limits<std::size_t>::max();
            for (std::size_t cand : pool) {
                if (cand == best || !compatible(docs[best], docs[cand], subset)) continue;
                if (partner == std::numeric_limits<std::size_t>::max() || better(cand, partner)) {
                    partner = cand;
                }
            }
            ++uses[best];
            ++uses[partner];

            Trial t;
            t.id = "t" + std::to_string(epoch_seed % 100000) + "-" + std::to_string(trial_counter++);
            t.doc1 = docs[best];
            t.doc2 = docs[partner];
            t.same_author = (subset == Subset::SA_SF || subset == Subset::SA_DF) ? 1 : 0;
            t.same_fandom = (subset == Subset::SA_SF || subset == Subset::DA_SF) ? 1 : 0;
            trials.push_back(std::move(t));
        }
    }
    return trials;
}

std::vector<Document> gen_synthetic(const SynthConfig& cfg) {
    if (cfg.n_authors < 2 || cfg.n_fandoms < 2) {
        throw InvalidConfig("gen_synthetic: need at least 2 authors and 2 fandoms");
    }
    if (cfg.docs_per_author < 1 || cfg.tokens_per_doc < 1) {
        throw InvalidConfig("gen_synthetic: document counts must be positive");
    }

    Rng rng(mix_seed(cfg.seed, 0x5eedULL));

    auto make_word = [&](Rng& r) {
        const int len = r.uniform_int(3, 7);
        std::string w;
        for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + r.index(26)));
        return w;
    };

    std::vector<std::string> shared_pool;
    for (int i = 0; i < cfg.shared_vocab; ++i) shared_pool.push_back(make_word(rng));

    std::vector<std::vector<std::string>> fandom_pool(static_cast<std::size_t>(cfg.n_fandoms));
    for (auto& pool : fandom_pool) {
        for (int i = 0; i < cfg.fandom_vocab; ++i) pool.push_back(make_word(rng));
    }

    // Styles draw from one corpus-wide substitution table: each author marks
    // a handful of letters and rewrites them to the table's targets with
    // probability style_strength. Authors are thus subsets of a shared rule
    // inventory (unseen authors recombine seen rules), and the authorial
    // signal lives purely in character statistics.
    std::array<char, 26> sub_table;
    for (int c = 0; c < 26; ++c) sub_table[c] = static_cast<char>('a' + rng.index(26));

    struct StyleMap {
        std::array<bool, 26> marked;
    };
    std::vector<StyleMap> styles(static_cast<std::size_t>(cfg.n_authors));
    for (auto& s : styles) {
        s.marked.fill(false);
        for (int k = 0; k < 8; ++k) s.marked[rng.index(26)] = true;
    }

    std::vector<Document> docs;
    docs.reserve(static_cast<std::size_t>(cfg.n_authors * cfg.docs_per_author));
    for (int a = 0; a < cfg.n_authors; ++a) {
        int prev_fandom = -1;
        for (int k = 0; k < cfg.docs_per_author; ++k) {
            int fandom;
            if (prev_fandom >= 0 && rng.uniform() < cfg.fandom_repeat) {
                fandom = prev_fandom;
            } else {
                fandom = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_fandoms)));
            }
            prev_fandom = fandom;

            std::string text;
            for (int t = 0; t < cfg.tokens_per_doc; ++t) {
                const bool topical = rng.uniform() < cfg.topic_strength;
                const auto& pool = topical ? fandom_pool[static_cast<std::size_t>(fandom)]
                                           : shared_pool;
                std::string w = pool[rng.index(pool.size())];
                for (char& ch : w) {
                    const int idx = ch - 'a';
                    if (styles[static_cast<std::size_t>(a)].marked[idx] &&
                        rng.uniform() < cfg.style_strength) {
                        ch = sub_table[idx];
                    }
                }
                if (t) text.push_back(' ');
                text += w;
            }

            Document d;
            d.author_id = "a" + std::to_string(a);
            d.fandom_id = "f" + std::to_string(fandom);
            d.id = d.author_id + "_d" + std::to_string(k);
            d.text = std::move(text);
            docs.push_back(std::move(d));
        }
    }
    return docs;
}

// ---- I/O --------------------------------------------------------------------

namespace {

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MalformedRecord("cannot open file: " + path);
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw MalformedRecord(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void require_field(const json& j, const char* field, const std::string& path,
                   std::size_t record) {
    if (!j.contains(field)) {
        throw MalformedRecord(path + ": record " + std::to_string(record) +
                              " missing field '" + field + "'");
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MalformedRecord("cannot write file: " + path);
    return out;
}

}  // namespace

void write_corpus(const std::string& path, const std::vector<Document>& docs) {
    auto out = open_out(path);
    for (const auto& d : docs) {
        json j{{"id", d.id}, {"text", d.text}, {"author", d.author_id}, {"fandom", d.fandom_id}};
        out << j.dump() << "\n";
    }
}

std::vector<Document> load_corpus(const std::string& path) {
    std::vector<Document> docs;
    std::size_t rec = 0;
    for (const auto& j : read_jsonl(path)) {
        ++rec;
        for (const char* f : {"id", "text", "author", "fandom"}) require_field(j, f, path, rec);
        Document d;
        d.id = j["id"].get<std::string>();
        d.text = j["text"].get<std::string>();
        d.author_id = j["author"].get<std::string>();
        d.fandom_id = j["fandom"].get<std::string>();
        docs.push_back(std::move(d));
    }
    return docs;
}

void write_pairs(const std::string& path, const std::vector<Trial>& trials) {
    auto out = open_out(path);
    for (const auto& t : trials) {
        json j{{"id", t.id},
               {"fandoms", {t.doc1.fandom_id, t.doc2.fandom_id}},
               {"pair", {t.doc1.text, t.doc2.text}}};
        out << j.dump() << "\n";
    }
}

void write_truth(const std::string& path, const std::vector<Trial>& trials) {
    auto out = open_out(path);
    for (const auto& t : trials) {
        json j{{"id", t.id},
               {"same", t.same_author != 0},
               {"authors", {t.doc1.author_id, t.doc2.author_id}},
               {"fandoms", {t.doc1.fandom_id, t.doc2.fandom_id}}};
        out << j.dump() << "\n";
    }
}

std::vector<Trial> load_pan_pairs(const std::string& pairs_path,
                                  const std::string& truth_path) {
    const auto pair_records = read_jsonl(pairs_path);
    const auto truth_records = read_jsonl(truth_path);
    if (pair_records.size() != truth_records.size()) {
        throw IdMismatch("pairs and truth files differ in record count");
    }

    std::unordered_map<std::string, const json*> truth_by_id;
    std::size_t rec = 0;
    for (const auto& j : truth_records) {
        ++rec;
        for (const char* f : {"id", "same", "authors"}) require_field(j, f, truth_path, rec);
        truth_by_id[j["id"].get<std::string>()] = &j;
    }

    std::vector<Trial> trials;
    rec = 0;
    for (const auto& j : pair_records) {
        ++rec;
        for (const char* f : {"id", "fandoms", "pair"}) require_field(j, f, pairs_path, rec);
        const std::string id = j["id"].get<std::string>();
        const auto it = truth_by_id.find(id);
        if (it == truth_by_id.end()) {
            throw IdMismatch("pair id '" + id + "' has no truth record");
        }
        const json& tr = *it->second;

        Trial t;
        t.id = id;
        t.doc1.id = id + "_1";
        t.doc2.id = id + "_2";
        t.doc1.text = j["pair"].at(0).get<std::string>();
        t.doc2.text = j["pair"].at(1).get<std::string>();
        t.doc1.fandom_id = j["fandoms"].at(0).get<std::string>();
        t.doc2.fandom_id = j["fandoms"].at(1).get<std::string>();
        t.doc1.author_id = tr["authors"].at(0).get<std::string>();
        t.doc2.author_id = tr["authors"].at(1).get<std::string>();
        t.same_author = tr["same"].get<bool>() ? 1 : 0;
        t.same_fandom = t.doc1.fandom_id == t.doc2.fandom_id ? 1 : 0;
        trials.push_back(std::move(t));
    }
    return trials;
}

std::vector<Trial> load_pairs_only(const std::string& pairs_path) {
    const auto pair_records = read_jsonl(pairs_path);
    std::vector<Trial> trials;
    std::size_t rec = 0;
    for (const auto& j : pair_records) {
        ++rec;
        for (const char* f : {"id", "fandoms", "pair"}) require_field(j, f, pairs_path, rec);
        Trial t;
        t.id = j["id"].get<std::string>();
        t.doc1.id = t.id + "_1";
        t.doc2.id = t.id + "_2";
        t.doc1.text = j["pair"].at(0).get<std::string>();
        t.doc2.text = j["pair"].at(1).get<std::string>();
        t.doc1.fandom_id = j["fandoms"].at(0).get<std::string>();
        t.doc2.fandom_id = j["fandoms"].at(1).get<std::string>();
        t.same_fandom = t.doc1.fandom_id == t.doc2.fandom_id ? 1 : 0;
        trials.push_back(std::move(t));
    }
    return trials;
}

void write_answers(const std::string& path, const std::vector<AnswerRecord>& answers) {
    auto out = open_out(path);
    for (const auto& a : answers) {
        json j{{"id", a.id}, {"value", a.value}};
        out << j.dump() << "\n";
    }
}

std::vector<AnswerRecord> load_answers(const std::string& path) {
    std::vector<AnswerRecord> out;
    std::size_t rec = 0;
    for (const auto& j : read_jsonl(path)) {
        ++rec;
        for (const char* f : {"id", "value"}) require_field(j, f, path, rec);
        const double value = j["value"].get<double>();
        if (!std::isfinite(value)) {
            throw MalformedRecord(path + ": record " + std::to_string(rec) +
                                  " has a non-finite value");
        }
        out.push_back({j["id"].get<std::string>(), value});
    }
    return out;
}

std::vector<TruthRecord> load_truth(const std::string& path) {
    std::vector<TruthRecord> out;
    std::size_t rec = 0;
    for (const auto& j : read_jsonl(path)) {
        ++rec;
        for (const char* f : {"id", "same", "authors"}) require_field(j, f, path, rec);
        TruthRecord t;
        t.id = j["id"].get<std::string>();
        t.same = j["same"].get<bool>() ? 1 : 0;
        t.author1 = j["authors"].at(0).get<std::string>();
        t.author2 = j["authors"].at(1).get<std::string>();
        if (j.contains("fandoms")) {
            t.fandom1 = j["fandoms"].at(0).get<std::string>();
            t.fandom2 = j["fandoms"].at(1).get<std::string>();
            t.has_fandoms = true;
        }
        out.push_back(std::move(t));
    }
    return out;
}

metrics::AnswerSet join_answers(const std::vector<AnswerRecord>& answers,
                                const std::vector<TruthRecord>& truth) {
    if (answers.size() != truth.size()) {
        throw IdMismatch("answers and truth differ in record count");
    }
    std::unordered_map<std::string, const TruthRecord*> by_id;
    for (const auto& t : truth) by_id[t.id] = &t;

    metrics::AnswerSet joined;
    std::set<std::string> seen;
    for (const auto& a : answers) {
        if (!seen.insert(a.id).second) throw IdMismatch("duplicate answer id '" + a.id + "'");
        const auto it = by_id.find(a.id);
        if (it == by_id.end()) throw IdMismatch("answer id '" + a.id + "' has no truth record");
        joined.push_back({a.id, a.value, it->second->same});
    }
    return joined;
}

}  // namespace av::dataprep
