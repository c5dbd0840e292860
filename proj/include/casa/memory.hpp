#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "casa/math.hpp"

namespace casa {

// A labelled training sample held for rehearsal. The label and the
// pseudo-domain id never change once stored.
struct MemoryEntry {
    std::int64_t sample_id = 0;
    Vec features;
    double label = 0.0;
    int pseudo_domain = 0;
    Vec embedding;
    bool flagged_for_deletion = false;
};

// Fixed-capacity training memory balanced across pseudo-domains. Arrival of
// a new domain flags random excess entries of the old domains; insertion
// consumes flagged slots while the entry's domain is under its quota and
// falls back to same-domain style-similarity replacement once it is not.
class RehearsalMemory {
public:
    explicit RehearsalMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity < 1) throw std::invalid_argument("RehearsalMemory: capacity must be >= 1");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool full() const { return entries_.size() >= capacity_; }
    std::size_t domain_count() const { return domain_count_; }
    const std::vector<MemoryEntry>& entries() const { return entries_; }

    std::size_t quota() const { return capacity_ / std::max<std::size_t>(1, domain_count_); }

    std::size_t count_of(int pd) const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.pseudo_domain == pd) ++n;
        return n;
    }

    std::size_t unflagged_count_of(int pd) const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.pseudo_domain == pd && !e.flagged_for_deletion) ++n;
        return n;
    }

    std::size_t flagged_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.flagged_for_deletion) ++n;
        return n;
    }

    std::vector<Vec> embeddings_of(int pd) const {
        std::vector<Vec> out;
        for (const auto& e : entries_)
            if (e.pseudo_domain == pd) out.push_back(e.embedding);
        return out;
    }

    // Uniform random subset of the base pool, all under the base domain.
    void init_from_base(const std::vector<MemoryEntry>& base_pool, std::size_t count,
                        std::mt19937_64& rng) {
        if (count > capacity_)
            throw std::invalid_argument("init_from_base: count exceeds memory capacity");
        if (count > base_pool.size())
            throw std::invalid_argument("init_from_base: count exceeds base pool size");
        std::vector<std::size_t> idx(base_pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        entries_.clear();
        entries_.reserve(count);
        for (std::size_t i = 0; i < count; ++i) entries_.push_back(base_pool[idx[i]]);
        domain_count_ = 1;
    }

    // Called when a new pseudo-domain joins: every pre-existing domain keeps
    // at most floor(M/D) randomly chosen entries unflagged.
    void on_new_domain(std::size_t new_domain_count, std::mt19937_64& rng) {
        if (new_domain_count != domain_count_ + 1)
            throw std::invalid_argument("on_new_domain: domain count must grow by one");
        domain_count_ = new_domain_count;
        const std::size_t q = quota();

        std::vector<int> pds;
        for (const auto& e : entries_)
            if (std::find(pds.begin(), pds.end(), e.pseudo_domain) == pds.end())
                pds.push_back(e.pseudo_domain);
        std::sort(pds.begin(), pds.end());

        for (int pd : pds) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < entries_.size(); ++i)
                if (entries_[i].pseudo_domain == pd) members.push_back(i);
            if (members.size() <= q) {
                for (std::size_t i : members) entries_[i].flagged_for_deletion = false;
                continue;
            }
            std::shuffle(members.begin(), members.end(), rng);
            for (std::size_t r = 0; r < members.size(); ++r)
                entries_[members[r]].flagged_for_deletion = (r >= q);
        }
    }

    // Quota-balanced insertion (the CASA path).
    void insert(MemoryEntry entry, std::mt19937_64& rng) {
        check_registered(entry.pseudo_domain);
        entry.flagged_for_deletion = false;
        if (entries_.size() < capacity_) {
            entries_.push_back(std::move(entry));
            return;
        }

        std::vector<std::size_t> flagged;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].flagged_for_deletion) flagged.push_back(i);

        const bool under_quota = unflagged_count_of(entry.pseudo_domain) < quota();
        if (under_quota && !flagged.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, flagged.size() - 1);
            entries_[flagged[pick(rng)]] = std::move(entry);
            return;
        }

        // same-domain replacement minimizing the style-embedding distance
        std::size_t victim = entries_.size();
        double best = std::numeric_limits<double>::infinity();
        bool unflagged_only = unflagged_count_of(entry.pseudo_domain) > 0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (e.pseudo_domain != entry.pseudo_domain) continue;
            if (unflagged_only && e.flagged_for_deletion) continue;
            const double d = squared_distance(entry.embedding, e.embedding);
            if (d < best) {
                best = d;
                victim = i;
            }
        }
        if (victim < entries_.size()) {
            entries_[victim] = std::move(entry);
            return;
        }

        // the entry's domain holds nothing and nothing is flagged: take the
        // nearest-embedding entry of the currently largest domain
        int largest_pd = 0;
        std::size_t largest_n = 0;
        std::vector<int> seen;
        for (const auto& e : entries_) {
            if (std::find(seen.begin(), seen.end(), e.pseudo_domain) != seen.end()) continue;
            seen.push_back(e.pseudo_domain);
            const std::size_t n = count_of(e.pseudo_domain);
            if (n > largest_n || (n == largest_n && e.pseudo_domain < largest_pd)) {
                largest_n = n;
                largest_pd = e.pseudo_domain;
            }
        }
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (e.pseudo_domain != largest_pd) continue;
            const double d = squared_distance(entry.embedding, e.embedding);
            if (d < best) {
                best = d;
                victim = i;
            }
        }
        entries_[victim] = std::move(entry);
    }

    // Reservoir-style uniform replacement with no domain balancing (baseline
    // policies). The base initialization counts toward the stream length.
    void insert_reservoir(MemoryEntry entry, std::mt19937_64& rng) {
        entry.flagged_for_deletion = false;
        seen_ += 1;
        if (entries_.size() < capacity_) {
            entries_.push_back(std::move(entry));
            return;
        }
        std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
        const std::uint64_t slot = pick(rng);
        if (slot < capacity_) entries_[slot] = std::move(entry);
    }

    // Marks the initial fill as already-seen items for reservoir accounting.
    void reset_reservoir_count() { seen_ = entries_.size(); }

    std::vector<const MemoryEntry*> sample_training_batch(std::size_t t,
                                                          std::mt19937_64& rng) const {
        if (entries_.empty())
            throw std::invalid_argument("sample_training_batch: memory is empty");
        std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
        std::vector<const MemoryEntry*> batch;
        batch.reserve(t);
        for (std::size_t i = 0; i < t; ++i) batch.push_back(&entries_[pick(rng)]);
        return batch;
    }

    void set_registered_domains(std::size_t n) { registered_domains_ = n; }

private:
    void check_registered(int pd) const {
        if (pd < 0 || (registered_domains_ > 0 &&
                       static_cast<std::size_t>(pd) >= registered_domains_))
            throw std::invalid_argument("RehearsalMemory::insert: unregistered pseudo-domain " +
                                        std::to_string(pd));
    }

    std::size_t capacity_;
    std::size_t domain_count_ = 1;
    std::size_t registered_domains_ = 0;  // 0 = no registry attached (tests)
    std::uint64_t seen_ = 0;
    std::vector<MemoryEntry> entries_;
};

}  // namespace casa
