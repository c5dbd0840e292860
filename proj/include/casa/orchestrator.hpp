#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "casa/config.hpp"
#include "casa/domains.hpp"
#include "casa/eval.hpp"
#include "casa/learners.hpp"
#include "casa/memory.hpp"
#include "casa/outliers.hpp"
#include "casa/pca.hpp"
#include "casa/stream.hpp"
#include "casa/style.hpp"

namespace casa {

// What a labelling policy is allowed to see: no label, no true-domain tag.
struct StreamItem {
    std::int64_t id = 0;
    const Vec* features = nullptr;
};

class BudgetLedger {
  public:
    explicit BudgetLedger(std::size_t total) : total_(total) {}

    std::size_t total() const { return total_; }
    std::size_t spent() const { return spent_; }
    bool remaining() const { return spent_ < total_; }
    const std::map<int, std::size_t>& per_domain() const { return per_domain_; }

    void charge(int domain_key) {
        if (spent_ >= total_) throw std::logic_error("budget ledger: charge beyond total");
        ++spent_;
        ++per_domain_[domain_key];
    }

  private:
    std::size_t total_;
    std::size_t spent_ = 0;
    std::map<int, std::size_t> per_domain_;
};

// Ground-truth label source; every query costs one budget unit.
class Oracle {
  public:
    Oracle(const std::map<std::int64_t, double>& truth, BudgetLedger& ledger)
        : truth_(&truth), ledger_(&ledger) {}

    double label(std::int64_t id, int domain_key) {
        ledger_->charge(domain_key);
        const auto it = truth_->find(id);
        if (it == truth_->end())
            throw std::logic_error("oracle: unknown sample id " + std::to_string(id));
        return it->second;
    }

  private:
    const std::map<std::int64_t, double>* truth_;
    BudgetLedger* ledger_;
};

struct BudgetEvent {
    std::size_t step = 0;  // 1-based stream position of the oracle call
    std::size_t spent = 0;
};

struct CheckpointMemory {
    std::size_t checkpoint = 0;
    std::size_t size = 0;
    std::size_t domains_registered = 1;
    std::map<int, std::map<int, std::size_t>> composition;  // true domain -> pd -> count
    std::map<int, std::size_t> unflagged_per_pd;
};

struct RunArtifacts {
    Policy policy = Policy::casa;
    std::uint64_t seed = 0;
    Matrix R;  // (segments+1) x domains
    double bwt_value = 0.0;
    double fwt_value = 0.0;
    std::size_t budget_total = 0;
    std::size_t oracle_calls = 0;
    std::map<int, std::size_t> spend_per_domain;
    std::vector<BudgetEvent> budget_events;
    std::vector<CheckpointMemory> memory_checkpoints;
    std::size_t pseudo_domains = 1;
    double certificate = 0.0;
    double resolved_t = 0.0;
    nlohmann::json registry;
    std::vector<ProjectedPoint> projection;
};

namespace detail {

inline std::vector<Vec> embed_records(const std::vector<Record>& records,
                                      const StyleExtractor& extractor, const PcaModel& pca,
                                      std::size_t w, std::size_t h) {
    std::vector<Vec> out;
    out.reserve(records.size());
    for (const Record& r : records)
        out.push_back(embed(r.patch, w, h, extractor, pca).values);
    return out;
}

// between-domain vs within-domain mean embedding distance
inline double separability_certificate(const std::vector<Vec>& embeddings,
                                       const std::vector<int>& domains) {
    double within = 0.0, between = 0.0;
    std::size_t nw = 0, nb = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            const double d = distance(embeddings[i], embeddings[j]);
            if (domains[i] == domains[j]) {
                within += d;
                ++nw;
            } else {
                between += d;
                ++nb;
            }
        }
    if (nw == 0 || nb == 0) return 0.0;
    return (between / static_cast<double>(nb)) / (within / static_cast<double>(nw));
}

inline double mean_pairwise_distance(const std::vector<Vec>& embeddings) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            acc += distance(embeddings[i], embeddings[j]);
            ++n;
        }
    if (n == 0) throw std::invalid_argument("mean_pairwise_distance: need at least 2 points");
    return acc / static_cast<double>(n);
}

inline double quantile_threshold(const std::deque<double>& window, double q) {
    Vec sorted(window.begin(), window.end());
    std::sort(sorted.begin(), sorted.end());
    const auto idx = std::min<std::size_t>(
        sorted.size() - 1, static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size()))));
    return sorted[idx];
}

}  // namespace detail

// Runs one end-to-end experiment: generate data, base-train, consume the
// stream under the configured policy, evaluate at segment boundaries.
inline RunArtifacts run_experiment(const PolicyConfig& config, std::uint64_t seed) {
    config.validate();

    const Dataset ds = generate(config.generator_spec(), seed);
    const std::size_t dim = ds.patch_w * ds.patch_h;
    const std::size_t segments = ds.segment_lengths.size();

    // truth maps live on the harness side only
    std::map<std::int64_t, double> label_of;
    std::map<std::int64_t, int> domain_of;
    for (const Record& r : ds.stream) {
        label_of[r.id] = r.label;
        domain_of[r.id] = r.domain;
    }

    StyleExtractorSpec ext_spec;
    ext_spec.seed = config.extractor_seed;
    const StyleExtractor extractor(ext_spec);

    std::vector<Vec> base_raw;
    base_raw.reserve(ds.base.size());
    for (const Record& r : ds.base)
        base_raw.push_back(raw_style_vector(extractor.extract(r.patch, ds.patch_w, ds.patch_h)));
    const PcaModel pca = fit_pca(base_raw, config.e);
    std::vector<Vec> base_embeddings;
    base_embeddings.reserve(base_raw.size());
    for (const Vec& v : base_raw) base_embeddings.push_back(pca.project(v));

    RunArtifacts art;
    art.policy = config.policy;
    art.seed = seed;
    art.budget_total = static_cast<std::size_t>(std::floor(config.beta *
                                                           static_cast<double>(ds.stream.size())));
    BudgetLedger ledger(art.budget_total);
    Oracle oracle(label_of, ledger);

    const double resolved_t =
        (config.t > 0.0) ? config.t
                         : config.t_scale * detail::mean_pairwise_distance(base_embeddings);
    art.resolved_t = resolved_t;

    // task learner + base training (base labels are free)
    std::unique_ptr<Learner> learner;
    if (ds.task == TaskKind::classification)
        learner = std::make_unique<SgdClassifier>(dim, ds.classes, config.lr,
                                                  derive_seed(seed, 0x1ea71), config.mc_passes,
                                                  config.p_drop);
    else
        learner = std::make_unique<SgdRegressor>(dim, config.lr, derive_seed(seed, 0x1ea71),
                                                 config.mc_passes, config.p_drop);
    {
        std::vector<TrainExample> base_set;
        base_set.reserve(ds.base.size());
        for (const Record& r : ds.base) base_set.push_back(TrainExample{&r.patch, r.label});
        std::mt19937_64 rng(derive_seed(seed, 0xba5e));
        base_train(*learner, base_set, config.base_epochs, config.T, rng);
    }

    // policy state
    std::mt19937_64 mem_rng(derive_seed(seed, 0x3e30));
    std::mt19937_64 ual_rng(derive_seed(seed, 0x0a1));
    DomainRegistry registry(config.P);
    RehearsalMemory memory(config.M);
    OutlierMemory outliers;

    int base_pd = 0;
    if (config.policy == Policy::casa) {
        const Vec center = mean_vector(base_embeddings);
        base_pd = registry.create_domain_with_center(center, base_embeddings, 0);
        memory.set_registered_domains(1);
    }
    {
        // initial fill from the base set; the base pseudo-domain covers it
        std::vector<MemoryEntry> pool;
        pool.reserve(ds.base.size());
        for (std::size_t i = 0; i < ds.base.size(); ++i)
            pool.push_back(MemoryEntry{ds.base[i].id, ds.base[i].patch, ds.base[i].label, base_pd,
                                       base_embeddings[i], false});
        memory.init_from_base(pool, std::min(config.M, pool.size()), mem_rng);
        memory.reset_reservoir_count();
    }

    const TaskKind kind = ds.task;
    art.R = Matrix(segments + 1, ds.tests.size());
    const auto record_row = [&](std::size_t row) {
        const Vec r = evaluate_row(*learner, ds.tests);
        for (std::size_t d = 0; d < r.size(); ++d) art.R(row, d) = r[d];
    };
    const auto record_memory = [&](std::size_t checkpoint) {
        CheckpointMemory cm;
        cm.checkpoint = checkpoint;
        cm.size = memory.size();
        cm.domains_registered =
            (config.policy == Policy::casa) ? registry.domains().size() : 1;
        std::map<std::int64_t, int> truth = domain_of;
        for (const Record& r : ds.base) truth[r.id] = r.domain;
        cm.composition = memory_composition(memory.entries(), truth);
        for (const MemoryEntry& e : memory.entries())
            if (!e.flagged_for_deletion) ++cm.unflagged_per_pd[e.pseudo_domain];
        art.memory_checkpoints.push_back(std::move(cm));
    };

    record_row(0);
    record_memory(0);

    // uncertainty window for UAL
    std::deque<double> u_window;

    const std::vector<std::size_t> boundaries = ds.boundaries();
    std::size_t next_boundary = 0;
    std::size_t pos = 0;  // stream samples consumed
    std::size_t checkpoint = 1;

    const auto train_steps = [&]() {
        for (std::size_t step = 0; step < config.b; ++step) {
            const auto picks = memory.sample_training_batch(config.T, mem_rng);
            std::vector<TrainExample> batch;
            batch.reserve(picks.size());
            for (const MemoryEntry* e : picks) batch.push_back(TrainExample{&e->features, e->label});
            learner->train_step(batch);
        }
    };

    while (pos < ds.stream.size()) {
        // batch never crosses a ground-truth boundary, so checkpoints are exact
        std::size_t batch_end = std::min(pos + config.B, ds.stream.size());
        if (next_boundary < boundaries.size())
            batch_end = std::min(batch_end, boundaries[next_boundary]);

        if (config.policy == Policy::casa) {
            for (std::size_t i = pos; i < batch_end; ++i) {
                const Record& r = ds.stream[i];
                const Vec emb = embed(r.patch, ds.patch_w, ds.patch_h, extractor, pca).values;
                const std::optional<int> pd = registry.assign(emb);
                if (!pd) {
                    outliers.add(r.id, r.patch, emb);
                    continue;
                }
                if (registry.is_complete(*pd, kind, config.k)) continue;  // no labels needed
                if (!ledger.remaining()) continue;
                const double y = oracle.label(r.id, *pd);
                art.budget_events.push_back(BudgetEvent{i + 1, ledger.spent()});
                const double perf = learner->metric(learner->predict(r.patch), y);
                registry.update_performance(*pd, perf);
                memory.insert(MemoryEntry{r.id, r.patch, y, *pd, emb, false}, mem_rng);
                std::vector<Vec> members;
                for (const MemoryEntry& e : memory.entries())
                    if (e.pseudo_domain == *pd) members.push_back(e.embedding);
                registry.recompute_radius(*pd, members);
            }
            if (outliers.size() >= config.o) {
                const auto group = outliers.discover(resolved_t, config.min_group);
                if (group) {
                    std::vector<Vec> member_embs;
                    for (const OutlierEntry& e : *group) member_embs.push_back(e.embedding);
                    const int new_pd = registry.create_domain(member_embs, batch_end);
                    // closest-to-center members get the remaining budget first
                    const Vec& center = registry.domains().at(static_cast<std::size_t>(new_pd)).center;
                    std::vector<std::size_t> order(group->size());
                    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                        const double da = squared_distance((*group)[a].embedding, center);
                        const double db = squared_distance((*group)[b].embedding, center);
                        if (da != db) return da < db;
                        return (*group)[a].sample_id < (*group)[b].sample_id;
                    });
                    std::vector<MemoryEntry> labelled;
                    for (std::size_t idx : order) {
                        if (!ledger.remaining()) break;
                        const OutlierEntry& e = (*group)[idx];
                        const double y = oracle.label(e.sample_id, new_pd);
                        art.budget_events.push_back(BudgetEvent{batch_end, ledger.spent()});
                        labelled.push_back(MemoryEntry{e.sample_id, e.features, y, new_pd,
                                                       e.embedding, false});
                    }
                    memory.set_registered_domains(registry.domains().size());
                    memory.on_new_domain(registry.domains().size(), mem_rng);
                    for (MemoryEntry& e : labelled) memory.insert(std::move(e), mem_rng);
                    std::vector<Vec> members;
                    for (const MemoryEntry& e : memory.entries())
                        if (e.pseudo_domain == new_pd) members.push_back(e.embedding);
                    if (!members.empty()) registry.recompute_radius(new_pd, members);
                }
            }
            outliers.tick_and_evict(config.z);
            train_steps();
        } else if (config.policy == Policy::nal) {
            const std::size_t n = config.n();
            for (std::size_t i = pos; i < batch_end; ++i) {
                if ((i + 1) % n != 0) continue;  // every n-th stream sample
                if (!ledger.remaining()) continue;
                const Record& r = ds.stream[i];
                const double y = oracle.label(r.id, -1);
                art.budget_events.push_back(BudgetEvent{i + 1, ledger.spent()});
                memory.insert_reservoir(MemoryEntry{r.id, r.patch, y, 0, Vec{}, false}, mem_rng);
            }
            train_steps();
        } else if (config.policy == Policy::ual) {
            for (std::size_t i = pos; i < batch_end; ++i) {
                const Record& r = ds.stream[i];
                const double u = learner->uncertainty(r.patch, ual_rng);
                u_window.push_back(u);
                if (u_window.size() > config.u_window) u_window.pop_front();
                const double threshold = detail::quantile_threshold(u_window, config.u_quantile());
                if (u < threshold || !ledger.remaining()) continue;
                const double y = oracle.label(r.id, -1);
                art.budget_events.push_back(BudgetEvent{i + 1, ledger.spent()});
                memory.insert_reservoir(MemoryEntry{r.id, r.patch, y, 0, Vec{}, false}, mem_rng);
            }
            train_steps();
        }
        // Policy::none ingests without labelling or training

        pos = batch_end;
        if (next_boundary < boundaries.size() && pos == boundaries[next_boundary]) {
            record_row(checkpoint);
            record_memory(checkpoint);
            ++checkpoint;
            ++next_boundary;
        }
    }

    art.oracle_calls = ledger.spent();
    art.spend_per_domain = ledger.per_domain();
    art.bwt_value = bwt(art.R, kind);
    art.fwt_value = fwt(art.R, kind);
    art.pseudo_domains = (config.policy == Policy::casa) ? registry.domains().size() : 1;
    art.registry = (config.policy == Policy::casa) ? registry.snapshot_json()
                                                   : nlohmann::json::object();

    // certificate + projection from the per-domain validation sets
    std::vector<Vec> val_embs;
    std::vector<int> val_tags;
    for (const auto& [d, recs] : ds.vals) {
        for (const Record& r : recs) {
            val_embs.push_back(embed(r.patch, ds.patch_w, ds.patch_h, extractor, pca).values);
            val_tags.push_back(d);
        }
    }
    art.certificate = detail::separability_certificate(val_embs, val_tags);
    if (val_embs.size() >= 3) art.projection = project_2d(val_embs, val_tags);

    return art;
}

// --- artifact files -----------------------------------------------------------

inline void write_artifacts(const RunArtifacts& art, const PolicyConfig& config,
                            const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string policy = to_string(art.policy);

    {
        std::ofstream out(out_dir + "/metrics.csv");
        if (!out) throw std::runtime_error("cannot open for writing: " + out_dir + "/metrics.csv");
        out << "checkpoint,domain,policy,seed,metric_value\n";
        for (std::size_t cp = 0; cp < art.R.rows; ++cp)
            for (std::size_t d = 0; d < art.R.cols; ++d)
                out << cp << "," << d << "," << policy << "," << art.seed << ","
                    << fmt_double(art.R(cp, d)) << "\n";
    }
    {
        std::ofstream out(out_dir + "/budget.csv");
        if (!out) throw std::runtime_error("cannot open for writing: " + out_dir + "/budget.csv");
        out << "step,spent\n";
        for (const BudgetEvent& e : art.budget_events) out << e.step << "," << e.spent << "\n";
    }
    {
        std::ofstream out(out_dir + "/memory.csv");
        if (!out) throw std::runtime_error("cannot open for writing: " + out_dir + "/memory.csv");
        out << "checkpoint,true_domain,pseudo_domain,count\n";
        for (const CheckpointMemory& cm : art.memory_checkpoints)
            for (const auto& [true_d, by_pd] : cm.composition)
                for (const auto& [pd, count] : by_pd)
                    out << cm.checkpoint << "," << true_d << "," << pd << "," << count << "\n";
    }
    {
        std::ofstream out(out_dir + "/transfer.csv");
        if (!out) throw std::runtime_error("cannot open for writing: " + out_dir + "/transfer.csv");
        out << "policy,seed,bwt,fwt\n";
        out << policy << "," << art.seed << "," << fmt_double(art.bwt_value) << ","
            << fmt_double(art.fwt_value) << "\n";
    }
    {
        std::ofstream out(out_dir + "/registry.json");
        if (!out) throw std::runtime_error("cannot open for writing: " + out_dir + "/registry.json");
        out << art.registry.dump(2) << "\n";
    }
    {
        nlohmann::json meta;
        meta["config"] = config.to_json();
        meta["seed"] = art.seed;
        meta["resolved_t"] = art.resolved_t;
        meta["budget_total"] = art.budget_total;
        meta["oracle_calls"] = art.oracle_calls;
        meta["pseudo_domains"] = art.pseudo_domains;
        meta["certificate"] = art.certificate;
        meta["bwt"] = art.bwt_value;
        meta["fwt"] = art.fwt_value;
        nlohmann::json spend = nlohmann::json::object();
        for (const auto& [d, c] : art.spend_per_domain) spend[std::to_string(d)] = c;
        meta["spend_per_domain"] = spend;
        std::ofstream out(out_dir + "/run_meta.json");
        if (!out) throw std::runtime_error("cannot open for writing: " + out_dir + "/run_meta.json");
        out << meta.dump(2) << "\n";
    }
    if (!art.projection.empty()) {
        write_projection_csv(out_dir + "/projection.csv", art.projection);
        write_projection_svg(out_dir + "/projection.svg", art.projection);
    }
}

}  // namespace casa
