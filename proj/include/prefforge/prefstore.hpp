#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefforge/frame.hpp"
#include "prefforge/segment_view.hpp"

namespace prefforge::prefstore {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ticket lookups and state-machine violations, mapped to HTTP codes by the service.
class TicketError : public StoreError {
 public:
  enum class Kind { unknown, already_answered, expired, budget_exhausted, bad_label };
  TicketError(Kind kind, const std::string& what) : StoreError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class SegmentPool { train, heldout };
enum class LabelSource { oracle, human };
enum class TicketStatus { pending, answered, expired };
enum class QueryStrategy { uniform, ensemble_disagreement };

std::string to_string(LabelSource s);
std::string to_string(TicketStatus s);
std::string to_string(QueryStrategy s);
QueryStrategy parse_query_strategy(const std::string& s);

struct Segment {
  std::uint64_t id = 0;
  std::vector<Frame> frames;
  std::vector<double> actions;
  int action_dim = 1;
  // Oracle-only. Empty for segments that came from an external labeler.
  std::vector<double> true_rewards;
  std::uint64_t episode_id = 0;
  std::uint32_t start_index = 0;
  SegmentPool pool = SegmentPool::train;

  SegmentView view() const { return {id, frames, actions, action_dim}; }
  bool operator==(const Segment&) const = default;
};

struct PreferenceTuple {
  std::uint64_t id = 0;
  std::uint64_t seg0 = 0;
  std::uint64_t seg1 = 0;
  int label = 0;
  LabelSource source = LabelSource::oracle;
  std::uint64_t created_at = 0;  // logical clock
  bool operator==(const PreferenceTuple&) const = default;
};

struct QueryTicket {
  std::uint64_t ticket_id = 0;
  std::uint64_t seg0 = 0;
  std::uint64_t seg1 = 0;
  std::uint64_t issued_at = 0;
  TicketStatus status = TicketStatus::pending;
  bool operator==(const QueryTicket&) const = default;
};

struct Episode {
  std::vector<Frame> frames;
  std::vector<double> actions;
  std::vector<double> true_rewards;  // may be empty (no oracle available)
  int action_dim = 1;
};

struct StoreConfig {
  int segment_length = 50;
  std::size_t budget_cap = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Immutable copy of the labeled dataset, safe to train on while the store
// keeps accepting labels.
class StoreSnapshot : public PreferenceSource {
 public:
  std::size_t pair_count() const override { return tuples_.size(); }
  LabeledPair pair(std::size_t index) const override;

  const std::vector<PreferenceTuple>& tuples() const { return tuples_; }

 private:
  friend class PreferenceStore;
  std::vector<PreferenceTuple> tuples_;
  std::vector<std::shared_ptr<const Segment>> first_, second_;
};

// Segments, the preference dataset, query tickets and the oracle labeler.
// Single writer, many readers: every public method takes the internal lock.
class PreferenceStore {
 public:
  explicit PreferenceStore(StoreConfig cfg);
  PreferenceStore(PreferenceStore&& other) noexcept;
  PreferenceStore& operator=(PreferenceStore&&) = delete;
  PreferenceStore(const PreferenceStore&) = delete;

  const StoreConfig& config() const { return cfg_; }

  // Registers non-overlapping windows of length H. Windows are aligned to the
  // end of the episode so the final (possibly goal-reaching) step is kept; the
  // leading remainder is dropped. Returns the new ids (empty if too short).
  std::vector<std::uint64_t> ingest_rollout(const Episode& episode, SegmentPool pool = SegmentPool::train);

  // 0 if seg0 has the larger true return, 1 if smaller, seeded coin on ties.
  int oracle_label(std::uint64_t seg0, std::uint64_t seg1);

  // Scores an unordered pair for the disagreement strategy (higher = more informative).
  using PairScorer = std::function<double(const SegmentView&, const SegmentView&)>;

  // Issues up to n new tickets over distinct unordered train-pool pairs. The
  // count is limited by the remaining budget minus pending tickets; the result
  // is empty once the budget is exhausted.
  std::vector<QueryTicket> schedule_queries(std::size_t n, QueryStrategy strategy = QueryStrategy::uniform,
                                            const PairScorer& scorer = {});

  PreferenceTuple answer_ticket(std::uint64_t ticket_id, int label, LabelSource source);
  void expire_ticket(std::uint64_t ticket_id);

  // Oracle-labeled evaluation pairs from the held-out pool. Ties are skipped.
  // Not part of the training dataset and not charged to the budget.
  std::vector<PreferenceTuple> make_heldout_pairs(std::size_t n);

  std::size_t feedback_budget_remaining() const;
  bool budget_exhausted() const { return feedback_budget_remaining() == 0; }

  std::size_t answered_count() const;
  std::size_t segment_count(std::optional<SegmentPool> pool = std::nullopt) const;
  std::vector<QueryTicket> tickets() const;
  std::vector<QueryTicket> pending_tickets() const;
  std::optional<QueryTicket> next_pending() const;
  std::vector<PreferenceTuple> tuples() const;
  std::vector<PreferenceTuple> heldout_tuples() const;
  std::shared_ptr<const Segment> segment(std::uint64_t id) const;

  StoreSnapshot snapshot() const;
  StoreSnapshot heldout_snapshot() const;

  // Directory with store.jsonl (manifest) and frames.bin (frame blob).
  void save(const std::filesystem::path& dir) const;
  static PreferenceStore load(const std::filesystem::path& dir);

  bool operator==(const PreferenceStore& other) const;

 private:
  std::shared_ptr<const Segment> find_segment(std::uint64_t id) const;
  int oracle_label_locked(std::uint64_t seg0, std::uint64_t seg1);
  StoreSnapshot make_snapshot(const std::vector<PreferenceTuple>& tuples) const;
  std::size_t pending_count_locked() const;

  StoreConfig cfg_;
  mutable std::shared_mutex mutex_;
  std::mt19937_64 rng_;
  std::uint64_t next_segment_id_ = 1;
  std::uint64_t next_tuple_id_ = 1;
  std::uint64_t next_ticket_id_ = 1;
  std::uint64_t clock_ = 0;
  std::vector<std::shared_ptr<const Segment>> segments_;
  std::vector<PreferenceTuple> tuples_;
  std::vector<PreferenceTuple> heldout_;
  std::vector<QueryTicket> tickets_;
  int frame_height_ = 0;
  int frame_width_ = 0;
};

}  // namespace prefforge::prefstore
