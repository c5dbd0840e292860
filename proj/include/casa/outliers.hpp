#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "casa/math.hpp"

namespace casa {

// An unassignable sample parked until it either joins a discovered group or
// ages out as a real outlier.
struct OutlierEntry {
    std::int64_t sample_id = 0;
    Vec features;
    Vec embedding;
    int age = 0;
};

class OutlierMemory {
public:
    std::size_t size() const { return entries_.size(); }
    const std::vector<OutlierEntry>& entries() const { return entries_; }

    void add(std::int64_t sample_id, Vec features, Vec embedding) {
        entries_.push_back(OutlierEntry{sample_id, std::move(features), std::move(embedding), 0});
    }

    // Ages every entry by one step; entries reaching z are removed and handed
    // back to the caller for disposal.
    std::vector<OutlierEntry> tick_and_evict(int z) {
        if (z < 1) throw std::invalid_argument("tick_and_evict: z must be >= 1");
        std::vector<OutlierEntry> evicted;
        std::vector<OutlierEntry> kept;
        kept.reserve(entries_.size());
        for (OutlierEntry& e : entries_) {
            e.age += 1;
            if (e.age >= z)
                evicted.push_back(std::move(e));
            else
                kept.push_back(std::move(e));
        }
        entries_ = std::move(kept);
        return evicted;
    }

    // Searches for a dense group: a clique of the strict-threshold distance
    // graph (edge where pairwise embedding distance < t). At desk scale the
    // maximum clique is found exactly (Bron-Kerbosch with pivoting); beyond
    // that a multi-seed greedy takes over. Ties between equal-size groups go
    // to the smallest total pairwise distance. Winning entries are removed.
    std::optional<std::vector<OutlierEntry>> discover(double t, std::size_t min_group) {
        if (t <= 0.0) throw std::invalid_argument("discover: threshold must be positive");
        if (min_group < 1) throw std::invalid_argument("discover: min_group must be >= 1");
        const std::size_t n = entries_.size();
        if (n < min_group) return std::nullopt;

        Matrix dist(n, n, 0.0);
        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = distance(entries_[i].embedding, entries_[j].embedding);
                dist(i, j) = d;
                dist(j, i) = d;
                if (d < t) adj[i][j] = adj[j][i] = true;
            }
        }

        std::vector<std::size_t> best;
        double best_sum = std::numeric_limits<double>::infinity();
        const auto offer = [&](const std::vector<std::size_t>& clique) {
            double sum = 0.0;
            for (std::size_t a = 0; a < clique.size(); ++a)
                for (std::size_t b = a + 1; b < clique.size(); ++b)
                    sum += dist(clique[a], clique[b]);
            if (clique.size() > best.size() || (clique.size() == best.size() && sum < best_sum)) {
                best = clique;
                best_sum = sum;
            }
        };

        constexpr std::size_t kExactLimit = 48;
        if (n <= kExactLimit) {
            // exact search over maximal cliques
            std::vector<std::size_t> current;
            const std::function<void(std::vector<std::size_t>, std::vector<std::size_t>)> expand =
                [&](std::vector<std::size_t> cand, std::vector<std::size_t> excluded) {
                    if (cand.empty() && excluded.empty()) {
                        offer(current);
                        return;
                    }
                    // pivot: vertex covering the most candidates
                    std::size_t pivot = 0;
                    int pivot_cover = -1;
                    for (std::size_t u : cand) {
                        int cover = 0;
                        for (std::size_t v : cand)
                            if (adj[u][v]) ++cover;
                        if (cover > pivot_cover) {
                            pivot_cover = cover;
                            pivot = u;
                        }
                    }
                    for (std::size_t u : excluded) {
                        int cover = 0;
                        for (std::size_t v : cand)
                            if (adj[u][v]) ++cover;
                        if (cover > pivot_cover) {
                            pivot_cover = cover;
                            pivot = u;
                        }
                    }
                    const std::vector<std::size_t> branch_on = [&] {
                        std::vector<std::size_t> out;
                        for (std::size_t v : cand)
                            if (!adj[pivot][v]) out.push_back(v);
                        return out;
                    }();
                    for (std::size_t v : branch_on) {
                        std::vector<std::size_t> next_cand, next_excluded;
                        for (std::size_t w : cand)
                            if (adj[v][w]) next_cand.push_back(w);
                        for (std::size_t w : excluded)
                            if (adj[v][w]) next_excluded.push_back(w);
                        current.push_back(v);
                        expand(std::move(next_cand), std::move(next_excluded));
                        current.pop_back();
                        cand.erase(std::find(cand.begin(), cand.end(), v));
                        excluded.push_back(v);
                    }
                };
            std::vector<std::size_t> all(n);
            std::iota(all.begin(), all.end(), std::size_t{0});
            expand(std::move(all), {});
        } else {
            // greedy growth from every seed vertex
            for (std::size_t seed = 0; seed < n; ++seed) {
                std::vector<std::size_t> clique{seed};
                std::vector<std::size_t> cands;
                for (std::size_t v = 0; v < n; ++v)
                    if (adj[seed][v]) cands.push_back(v);

                while (!cands.empty()) {
                    // best-connected candidate: most neighbors among the
                    // remaining candidates, then closest to the clique
                    std::size_t pick = cands.front();
                    int pick_conn = -1;
                    double pick_dist = std::numeric_limits<double>::infinity();
                    for (std::size_t c : cands) {
                        int conn = 0;
                        for (std::size_t other : cands)
                            if (other != c && adj[c][other]) ++conn;
                        double dsum = 0.0;
                        for (std::size_t m : clique) dsum += dist(c, m);
                        if (conn > pick_conn || (conn == pick_conn && dsum < pick_dist)) {
                            pick_conn = conn;
                            pick_dist = dsum;
                            pick = c;
                        }
                    }
                    clique.push_back(pick);
                    std::vector<std::size_t> next;
                    for (std::size_t c : cands)
                        if (c != pick && adj[pick][c]) next.push_back(c);
                    cands = std::move(next);
                }
                offer(clique);
            }
        }

        if (best.size() < min_group) return std::nullopt;

        // clique property holds by construction; verify anyway
        for (std::size_t a = 0; a < best.size(); ++a)
            for (std::size_t b = a + 1; b < best.size(); ++b)
                if (!(dist(best[a], best[b]) < t))
                    throw std::logic_error("discover: produced group violates threshold");

        std::sort(best.begin(), best.end());
        std::vector<OutlierEntry> group;
        group.reserve(best.size());
        std::vector<OutlierEntry> kept;
        kept.reserve(n - best.size());
        std::size_t next_removed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (next_removed < best.size() && best[next_removed] == i) {
                group.push_back(std::move(entries_[i]));
                ++next_removed;
            } else {
                kept.push_back(std::move(entries_[i]));
            }
        }
        entries_ = std::move(kept);
        return group;
    }

private:
    std::vector<OutlierEntry> entries_;
};

}  // namespace casa
