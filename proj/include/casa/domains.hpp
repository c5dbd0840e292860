#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "casa/math.hpp"

namespace casa {

enum class TaskKind {
    classification,  // higher metric is better
    regression,      // lower metric is better
};

// One pseudo-domain: style-embedding center, acceptance radius and a rolling
// window of pre-training performance values on oracle-labelled samples.
struct PseudoDomain {
    int id = 0;
    Vec center;
    double radius = 0.0;
    std::deque<double> perf_window;
    long created_at = 0;
    bool completed = false;

    double perf_mean() const {
        if (perf_window.empty()) return 0.0;
        double s = 0.0;
        for (double v : perf_window) s += v;
        return s / static_cast<double>(perf_window.size());
    }
};

// Radius rule: two times the mean Euclidean distance between the center and
// the member embeddings.
inline double compute_radius(const Vec& center, const std::vector<Vec>& members) {
    if (members.empty()) throw std::invalid_argument("compute_radius: no members");
    double s = 0.0;
    for (const Vec& m : members) s += distance(center, m);
    return 2.0 * s / static_cast<double>(members.size());
}

// The set of pseudo-domains discovered so far. Single-writer: only the
// orchestrator loop mutates it; ids are never reused within a run.
class DomainRegistry {
public:
    explicit DomainRegistry(std::size_t perf_window_capacity = 5)
        : perf_capacity_(perf_window_capacity) {
        if (perf_window_capacity == 0)
            throw std::invalid_argument("DomainRegistry: P must be >= 1");
    }

    std::size_t size() const { return domains_.size(); }
    bool empty() const { return domains_.empty(); }
    std::size_t perf_window_capacity() const { return perf_capacity_; }
    const std::vector<PseudoDomain>& domains() const { return domains_; }

    const PseudoDomain& domain(int id) const { return domains_.at(index_of(id)); }

    // Nearest-center assignment with radius test applied to the argmin only:
    // the closest center wins or nothing does. Ties break to the lowest id.
    std::optional<int> assign(const Vec& emb) const {
        if (domains_.empty()) return std::nullopt;
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < domains_.size(); ++i) {
            const double d = distance(emb, domains_[i].center);
            if (d < best_dist) {
                best_dist = d;
                best = i;
            }
        }
        if (best_dist <= domains_[best].radius) return domains_[best].id;
        return std::nullopt;
    }

    // New domain from a member group: center is the componentwise mean,
    // radius follows the radius rule, performance window starts empty.
    int create_domain(const std::vector<Vec>& member_embeddings, long step) {
        if (member_embeddings.empty())
            throw std::invalid_argument("create_domain: no members");
        PseudoDomain pd;
        pd.id = next_id_++;
        pd.center = mean_vector(member_embeddings);
        pd.radius = compute_radius(pd.center, member_embeddings);
        pd.created_at = step;
        domains_.push_back(std::move(pd));
        return domains_.back().id;
    }

    // Seeds the registry with an explicit center/member set (base domain).
    int create_domain_with_center(Vec center, const std::vector<Vec>& member_embeddings,
                                  long step) {
        if (member_embeddings.empty())
            throw std::invalid_argument("create_domain_with_center: no members");
        PseudoDomain pd;
        pd.id = next_id_++;
        pd.center = std::move(center);
        pd.radius = compute_radius(pd.center, member_embeddings);
        pd.created_at = step;
        domains_.push_back(std::move(pd));
        return domains_.back().id;
    }

    // Pushes a pre-training performance value, evicting the oldest once the
    // window holds P entries.
    void update_performance(int id, double value) {
        if (!std::isfinite(value))
            throw std::invalid_argument("update_performance: non-finite value");
        PseudoDomain& pd = domains_[index_of(id)];
        pd.perf_window.push_back(value);
        while (pd.perf_window.size() > perf_capacity_) pd.perf_window.pop_front();
    }

    // Complete once the window is full and the mean clears the threshold in
    // the task's direction. Completion is permanent.
    bool is_complete(int id, TaskKind kind, double k) {
        PseudoDomain& pd = domains_[index_of(id)];
        if (pd.completed) return true;
        if (pd.perf_window.size() < perf_capacity_) return false;
        const double p = pd.perf_mean();
        const bool done = (kind == TaskKind::classification) ? (p > k) : (p < k);
        if (done) pd.completed = true;
        return done;
    }

    // Radius tracks the memory membership of the domain; the center stays
    // frozen at creation.
    void recompute_radius(int id, const std::vector<Vec>& member_embeddings) {
        if (member_embeddings.empty()) return;
        PseudoDomain& pd = domains_[index_of(id)];
        pd.radius = compute_radius(pd.center, member_embeddings);
    }

    nlohmann::json snapshot_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const PseudoDomain& pd : domains_) {
            nlohmann::json j;
            j["id"] = pd.id;
            j["center"] = pd.center;
            j["radius"] = pd.radius;
            j["perf_window"] = std::vector<double>(pd.perf_window.begin(), pd.perf_window.end());
            j["completed"] = pd.completed;
            j["created_at"] = pd.created_at;
            out.push_back(std::move(j));
        }
        return out;
    }

private:
    std::size_t index_of(int id) const {
        for (std::size_t i = 0; i < domains_.size(); ++i)
            if (domains_[i].id == id) return i;
        throw std::out_of_range("DomainRegistry: unknown domain id " + std::to_string(id));
    }

    std::vector<PseudoDomain> domains_;
    std::size_t perf_capacity_;
    int next_id_ = 0;
};

}  // namespace casa
