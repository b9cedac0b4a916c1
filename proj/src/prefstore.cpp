#include "prefforge/prefstore.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace prefforge::prefstore {

using nlohmann::json;

std::string to_string(LabelSource s) { return s == LabelSource::oracle ? "oracle" : "human"; }

std::string to_string(TicketStatus s) {
  switch (s) {
    case TicketStatus::pending: return "pending";
    case TicketStatus::answered: return "answered";
    case TicketStatus::expired: return "expired";
  }
  return "?";
}

std::string to_string(QueryStrategy s) {
  return s == QueryStrategy::uniform ? "uniform" : "ensemble_disagreement";
}

QueryStrategy parse_query_strategy(const std::string& s) {
  if (s == "uniform") return QueryStrategy::uniform;
  if (s == "ensemble_disagreement") return QueryStrategy::ensemble_disagreement;
  throw std::invalid_argument("unknown query strategy '" + s + "'");
}

namespace {

LabelSource parse_source(const std::string& s) {
  if (s == "oracle") return LabelSource::oracle;
  if (s == "human") return LabelSource::human;
  throw StoreError("unknown label source '" + s + "'");
}

TicketStatus parse_status(const std::string& s) {
  if (s == "pending") return TicketStatus::pending;
  if (s == "answered") return TicketStatus::answered;
  if (s == "expired") return TicketStatus::expired;
  throw StoreError("unknown ticket status '" + s + "'");
}

std::uint64_t unordered_key(std::uint64_t a, std::uint64_t b) {
  if (a > b) std::swap(a, b);
  return (a << 32) ^ b;
}

}  // namespace

void StoreConfig::validate() const {
  if (segment_length < 1) throw std::invalid_argument("store.segment_length must be >= 1");
}

LabeledPair StoreSnapshot::pair(std::size_t index) const {
  return {first_.at(index)->view(), second_.at(index)->view(), tuples_.at(index).label};
}

PreferenceStore::PreferenceStore(StoreConfig cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

PreferenceStore::PreferenceStore(PreferenceStore&& other) noexcept {
  std::unique_lock lock(other.mutex_);
  cfg_ = other.cfg_;
  rng_ = other.rng_;
  next_segment_id_ = other.next_segment_id_;
  next_tuple_id_ = other.next_tuple_id_;
  next_ticket_id_ = other.next_ticket_id_;
  clock_ = other.clock_;
  segments_ = std::move(other.segments_);
  tuples_ = std::move(other.tuples_);
  heldout_ = std::move(other.heldout_);
  tickets_ = std::move(other.tickets_);
  frame_height_ = other.frame_height_;
  frame_width_ = other.frame_width_;
}

std::shared_ptr<const Segment> PreferenceStore::find_segment(std::uint64_t id) const {
  if (id == 0 || id > segments_.size()) throw StoreError("unknown segment id " + std::to_string(id));
  return segments_[id - 1];
}

std::shared_ptr<const Segment> PreferenceStore::segment(std::uint64_t id) const {
  std::shared_lock lock(mutex_);
  return find_segment(id);
}

std::vector<std::uint64_t> PreferenceStore::ingest_rollout(const Episode& episode, SegmentPool pool) {
  const std::size_t len = episode.frames.size();
  const std::size_t adim = static_cast<std::size_t>(episode.action_dim);
  if (episode.actions.size() != len * adim) throw StoreError("ingest_rollout: actions/frames length mismatch");
  if (!episode.true_rewards.empty() && episode.true_rewards.size() != len) {
    throw StoreError("ingest_rollout: true_rewards/frames length mismatch");
  }
  const std::size_t h = static_cast<std::size_t>(cfg_.segment_length);
  std::vector<std::uint64_t> ids;
  if (len < h) return ids;  // too short: nothing to register

  std::unique_lock lock(mutex_);
  const Frame& probe = episode.frames.front();
  if (frame_height_ == 0) {
    frame_height_ = probe.height;
    frame_width_ = probe.width;
  }
  for (const Frame& f : episode.frames) {
    if (f.height != frame_height_ || f.width != frame_width_) throw ShapeError("ingest_rollout: frame shape differs from store");
  }

  const std::size_t count = len / h;
  const std::size_t skip = len - count * h;
  const std::uint64_t episode_id = clock_;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = skip + k * h;
    auto seg = std::make_shared<Segment>();
    seg->id = next_segment_id_++;
    seg->frames.assign(episode.frames.begin() + start, episode.frames.begin() + start + h);
    seg->actions.assign(episode.actions.begin() + start * adim, episode.actions.begin() + (start + h) * adim);
    seg->action_dim = episode.action_dim;
    if (!episode.true_rewards.empty()) {
      seg->true_rewards.assign(episode.true_rewards.begin() + start, episode.true_rewards.begin() + start + h);
    }
    seg->episode_id = episode_id;
    seg->start_index = static_cast<std::uint32_t>(start);
    seg->pool = pool;
    ids.push_back(seg->id);
    segments_.push_back(std::move(seg));
  }
  ++clock_;
  return ids;
}

int PreferenceStore::oracle_label_locked(std::uint64_t seg0, std::uint64_t seg1) {
  auto a = find_segment(seg0);
  auto b = find_segment(seg1);
  if (a->true_rewards.empty() || b->true_rewards.empty()) {
    throw StoreError("oracle_label: segment without true rewards cannot be labeled by the oracle");
  }
  const double ra = std::accumulate(a->true_rewards.begin(), a->true_rewards.end(), 0.0);
  const double rb = std::accumulate(b->true_rewards.begin(), b->true_rewards.end(), 0.0);
  if (ra > rb) return 0;
  if (ra < rb) return 1;
  return static_cast<int>(rng_() >> 63);
}

int PreferenceStore::oracle_label(std::uint64_t seg0, std::uint64_t seg1) {
  std::unique_lock lock(mutex_);
  return oracle_label_locked(seg0, seg1);
}

std::size_t PreferenceStore::pending_count_locked() const {
  return static_cast<std::size_t>(std::count_if(tickets_.begin(), tickets_.end(), [](const QueryTicket& t) {
    return t.status == TicketStatus::pending;
  }));
}

std::vector<QueryTicket> PreferenceStore::schedule_queries(std::size_t n, QueryStrategy strategy,
                                                           const PairScorer& scorer) {
  std::unique_lock lock(mutex_);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i]->pool == SegmentPool::train) pool.push_back(i);
  }
  if (pool.size() < 2) throw StoreError("schedule_queries: need at least 2 stored segments");

  const std::size_t remaining = cfg_.budget_cap - std::min(cfg_.budget_cap, tuples_.size());
  const std::size_t pending = pending_count_locked();
  n = std::min(n, remaining > pending ? remaining - pending : 0);
  const std::size_t max_pairs = pool.size() * (pool.size() - 1) / 2;
  if (n == 0) return {};

  std::set<std::uint64_t> taken;
  for (const QueryTicket& t : tickets_) {
    if (t.status == TicketStatus::pending) taken.insert(unordered_key(t.seg0, t.seg1));
  }

  const bool ranked = strategy == QueryStrategy::ensemble_disagreement && scorer;
  const std::size_t want = ranked ? std::min<std::size_t>(n * 10, max_pairs) : n;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> picks;
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  const std::size_t max_attempts = 64 * want + 64;
  for (std::size_t attempt = 0; picks.size() < want && attempt < max_attempts; ++attempt) {
    std::size_t i = dist(rng_), j = dist(rng_);
    if (i == j) continue;
    const std::uint64_t a = segments_[pool[i]]->id, b = segments_[pool[j]]->id;
    if (!taken.insert(unordered_key(a, b)).second) continue;
    picks.emplace_back(a, b);
  }

  if (ranked) {
    std::vector<double> scores;
    for (auto [a, b] : picks) scores.push_back(scorer(find_segment(a)->view(), find_segment(b)->view()));
    std::vector<std::size_t> order(picks.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
    std::vector<std::pair<std::uint64_t, std::uint64_t>> top;
    for (std::size_t k = 0; k < std::min(n, order.size()); ++k) top.push_back(picks[order[k]]);
    picks = std::move(top);
  }

  std::vector<QueryTicket> issued;
  for (auto [a, b] : picks) {
    QueryTicket t{next_ticket_id_++, a, b, clock_++, TicketStatus::pending};
    tickets_.push_back(t);
    issued.push_back(t);
  }
  return issued;
}

PreferenceTuple PreferenceStore::answer_ticket(std::uint64_t ticket_id, int label, LabelSource source) {
  using Kind = TicketError::Kind;
  std::unique_lock lock(mutex_);
  auto it = std::find_if(tickets_.begin(), tickets_.end(), [&](const QueryTicket& t) { return t.ticket_id == ticket_id; });
  if (it == tickets_.end()) throw TicketError(Kind::unknown, "unknown ticket " + std::to_string(ticket_id));
  if (label != 0 && label != 1) throw TicketError(Kind::bad_label, "label must be 0 or 1");
  if (it->status == TicketStatus::answered) {
    throw TicketError(Kind::already_answered, "ticket " + std::to_string(ticket_id) + " already answered");
  }
  if (it->status == TicketStatus::expired) {
    throw TicketError(Kind::expired, "ticket " + std::to_string(ticket_id) + " expired");
  }
  if (tuples_.size() >= cfg_.budget_cap) throw TicketError(Kind::budget_exhausted, "feedback budget exhausted");

  PreferenceTuple tuple{next_tuple_id_++, it->seg0, it->seg1, label, source, clock_++};
  tuples_.push_back(tuple);
  it->status = TicketStatus::answered;
  return tuple;
}

void PreferenceStore::expire_ticket(std::uint64_t ticket_id) {
  std::unique_lock lock(mutex_);
  auto it = std::find_if(tickets_.begin(), tickets_.end(), [&](const QueryTicket& t) { return t.ticket_id == ticket_id; });
  if (it == tickets_.end()) throw TicketError(TicketError::Kind::unknown, "unknown ticket " + std::to_string(ticket_id));
  if (it->status == TicketStatus::pending) it->status = TicketStatus::expired;
}

std::vector<PreferenceTuple> PreferenceStore::make_heldout_pairs(std::size_t n) {
  std::unique_lock lock(mutex_);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i]->pool == SegmentPool::heldout) pool.push_back(i);
  }
  if (pool.size() < 2) throw StoreError("make_heldout_pairs: need at least 2 held-out segments");
  std::vector<PreferenceTuple> made;
  std::set<std::uint64_t> taken;
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  for (std::size_t attempt = 0; made.size() < n && attempt < 64 * n + 64; ++attempt) {
    const Segment& a = *segments_[pool[dist(rng_)]];
    const Segment& b = *segments_[pool[dist(rng_)]];
    if (a.id == b.id || !taken.insert(unordered_key(a.id, b.id)).second) continue;
    const double ra = std::accumulate(a.true_rewards.begin(), a.true_rewards.end(), 0.0);
    const double rb = std::accumulate(b.true_rewards.begin(), b.true_rewards.end(), 0.0);
    if (ra == rb) continue;
    PreferenceTuple t{next_tuple_id_++, a.id, b.id, ra > rb ? 0 : 1, LabelSource::oracle, clock_++};
    heldout_.push_back(t);
    made.push_back(t);
  }
  return made;
}

std::size_t PreferenceStore::feedback_budget_remaining() const {
  std::shared_lock lock(mutex_);
  return cfg_.budget_cap - std::min(cfg_.budget_cap, tuples_.size());
}

std::size_t PreferenceStore::answered_count() const {
  std::shared_lock lock(mutex_);
  return tuples_.size();
}

std::size_t PreferenceStore::segment_count(std::optional<SegmentPool> pool) const {
  std::shared_lock lock(mutex_);
  if (!pool) return segments_.size();
  return static_cast<std::size_t>(
      std::count_if(segments_.begin(), segments_.end(), [&](const auto& s) { return s->pool == *pool; }));
}

std::vector<QueryTicket> PreferenceStore::tickets() const {
  std::shared_lock lock(mutex_);
  return tickets_;
}

std::vector<QueryTicket> PreferenceStore::pending_tickets() const {
  std::shared_lock lock(mutex_);
  std::vector<QueryTicket> out;
  for (const QueryTicket& t : tickets_) {
    if (t.status == TicketStatus::pending) out.push_back(t);
  }
  return out;
}

std::optional<QueryTicket> PreferenceStore::next_pending() const {
  std::shared_lock lock(mutex_);
  for (const QueryTicket& t : tickets_) {
    if (t.status == TicketStatus::pending) return t;
  }
  return std::nullopt;
}

std::vector<PreferenceTuple> PreferenceStore::tuples() const {
  std::shared_lock lock(mutex_);
  return tuples_;
}

std::vector<PreferenceTuple> PreferenceStore::heldout_tuples() const {
  std::shared_lock lock(mutex_);
  return heldout_;
}

StoreSnapshot PreferenceStore::make_snapshot(const std::vector<PreferenceTuple>& tuples) const {
  StoreSnapshot snap;
  snap.tuples_ = tuples;
  for (const PreferenceTuple& t : tuples) {
    snap.first_.push_back(find_segment(t.seg0));
    snap.second_.push_back(find_segment(t.seg1));
  }
  return snap;
}

StoreSnapshot PreferenceStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return make_snapshot(tuples_);
}

StoreSnapshot PreferenceStore::heldout_snapshot() const {
  std::shared_lock lock(mutex_);
  return make_snapshot(heldout_);
}

bool PreferenceStore::operator==(const PreferenceStore& other) const {
  std::shared_lock a(mutex_);
  std::shared_lock b(other.mutex_);
  if (cfg_.segment_length != other.cfg_.segment_length || cfg_.budget_cap != other.cfg_.budget_cap ||
      cfg_.seed != other.cfg_.seed) {
    return false;
  }
  if (!(rng_ == other.rng_) || next_segment_id_ != other.next_segment_id_ || next_tuple_id_ != other.next_tuple_id_ ||
      next_ticket_id_ != other.next_ticket_id_ || clock_ != other.clock_) {
    return false;
  }
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!(*segments_[i] == *other.segments_[i])) return false;
  }
  return tuples_ == other.tuples_ && heldout_ == other.heldout_ && tickets_ == other.tickets_;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kBlobMagic[8] = {'P', 'F', 'F', 'R', 'A', 'M', 'E', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw StoreError("frame blob truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}
std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw StoreError("frame blob truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StoreError("write failed: " + path.string());
}

json tuple_json(const PreferenceTuple& t, const char* type) {
  return {{"type", type},         {"id", t.id},       {"seg0", t.seg0},
          {"seg1", t.seg1},       {"label", t.label}, {"source", to_string(t.source)},
          {"created_at", t.created_at}};
}

PreferenceTuple tuple_from(const json& j) {
  return {j.at("id").get<std::uint64_t>(),   j.at("seg0").get<std::uint64_t>(),
          j.at("seg1").get<std::uint64_t>(), j.at("label").get<int>(),
          parse_source(j.at("source").get<std::string>()), j.at("created_at").get<std::uint64_t>()};
}

}  // namespace

void PreferenceStore::save(const std::filesystem::path& dir) const {
  std::shared_lock lock(mutex_);
  std::filesystem::create_directories(dir);

  std::ostringstream rng_state;
  rng_state << rng_;

  std::string manifest;
  auto emit = [&](const json& j) { manifest += j.dump() + "\n"; };
  emit({{"type", "header"},
        {"format", "prefforge-store"},
        {"version", kFormatVersion},
        {"segment_length", cfg_.segment_length},
        {"budget_cap", cfg_.budget_cap},
        {"seed", cfg_.seed},
        {"rng", rng_state.str()},
        {"next_segment_id", next_segment_id_},
        {"next_tuple_id", next_tuple_id_},
        {"next_ticket_id", next_ticket_id_},
        {"clock", clock_},
        {"frame_height", frame_height_},
        {"frame_width", frame_width_}});
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = *segments_[i];
    json j = {{"type", "segment"},
              {"id", s.id},
              {"episode_id", s.episode_id},
              {"start_index", s.start_index},
              {"pool", s.pool == SegmentPool::train ? "train" : "heldout"},
              {"action_dim", s.action_dim},
              {"actions", s.actions},
              {"blob_index", i}};
    j["true_rewards"] = s.true_rewards.empty() ? json(nullptr) : json(s.true_rewards);
    emit(j);
  }
  for (const PreferenceTuple& t : tuples_) emit(tuple_json(t, "tuple"));
  for (const PreferenceTuple& t : heldout_) emit(tuple_json(t, "heldout_tuple"));
  for (const QueryTicket& t : tickets_) {
    emit({{"type", "ticket"},
          {"ticket_id", t.ticket_id},
          {"seg0", t.seg0},
          {"seg1", t.seg1},
          {"issued_at", t.issued_at},
          {"status", to_string(t.status)}});
  }
  emit({{"type", "footer"}, {"crc32", crc32_of(manifest)}});

  std::string blob(kBlobMagic, sizeof(kBlobMagic));
  put_u32(blob, kFormatVersion);
  put_u32(blob, static_cast<std::uint32_t>(cfg_.segment_length));
  put_u32(blob, static_cast<std::uint32_t>(frame_height_));
  put_u32(blob, static_cast<std::uint32_t>(frame_width_));
  put_u64(blob, segments_.size());
  const std::uint64_t seg_bytes =
      static_cast<std::uint64_t>(cfg_.segment_length) * frame_height_ * frame_width_;
  for (std::size_t i = 0; i < segments_.size(); ++i) put_u64(blob, i * seg_bytes);
  for (const auto& s : segments_) {
    for (const Frame& f : s->frames) blob.append(f.pixels.begin(), f.pixels.end());
  }
  put_u32(blob, crc32_of(blob));

  write_file(dir / "store.jsonl", manifest);
  write_file(dir / "frames.bin", blob);
}

PreferenceStore PreferenceStore::load(const std::filesystem::path& dir) {
  const std::string manifest = read_file(dir / "store.jsonl");
  const std::string blob = read_file(dir / "frames.bin");

  // Manifest checksum covers every line before the footer.
  const std::size_t footer_start = manifest.rfind('\n', manifest.size() >= 2 ? manifest.size() - 2 : 0);
  if (manifest.empty() || footer_start == std::string::npos) throw StoreError("store manifest truncated");
  const std::string body = manifest.substr(0, footer_start + 1);
  json footer;
  try {
    footer = json::parse(manifest.substr(footer_start + 1));
  } catch (const json::exception&) {
    throw StoreError("store manifest truncated (no footer)");
  }
  if (footer.value("type", "") != "footer") throw StoreError("store manifest truncated (no footer)");
  if (footer.at("crc32").get<std::uint32_t>() != crc32_of(body)) throw StoreError("store manifest checksum mismatch");

  if (blob.size() < sizeof(kBlobMagic) + 4) throw StoreError("frame blob truncated");
  {
    std::size_t p = blob.size() - 4;
    if (get_u32(blob, p) != crc32_of(blob.substr(0, blob.size() - 4))) throw StoreError("frame blob checksum mismatch");
  }
  if (blob.compare(0, sizeof(kBlobMagic), kBlobMagic, sizeof(kBlobMagic)) != 0) throw StoreError("bad frame blob magic");

  std::size_t pos = sizeof(kBlobMagic);
  if (get_u32(blob, pos) != kFormatVersion) throw StoreError("frame blob version mismatch");
  const std::uint32_t seg_len = get_u32(blob, pos);
  const int height = static_cast<int>(get_u32(blob, pos));
  const int width = static_cast<int>(get_u32(blob, pos));
  const std::uint64_t count = get_u64(blob, pos);
  std::vector<std::uint64_t> offsets(count);
  for (auto& o : offsets) o = get_u64(blob, pos);
  const std::size_t data_start = pos;
  const std::size_t frame_bytes = static_cast<std::size_t>(height) * width;

  try {
    std::istringstream lines(body);
    std::string line;
    std::getline(lines, line);
    const json header = json::parse(line);
    if (header.at("type") != "header" || header.at("format") != "prefforge-store") {
      throw StoreError("store manifest has no header");
    }
    if (header.at("version").get<std::uint32_t>() != kFormatVersion) throw StoreError("store version mismatch");
    StoreConfig cfg;
    cfg.segment_length = header.at("segment_length").get<int>();
    cfg.budget_cap = header.at("budget_cap").get<std::size_t>();
    cfg.seed = header.at("seed").get<std::uint64_t>();
    if (static_cast<std::uint32_t>(cfg.segment_length) != seg_len) throw StoreError("manifest/blob segment length differ");

    PreferenceStore store(cfg);
    std::istringstream rng_state(header.at("rng").get<std::string>());
    rng_state >> store.rng_;
    if (!rng_state) throw StoreError("bad generator state in manifest");
    store.next_segment_id_ = header.at("next_segment_id").get<std::uint64_t>();
    store.next_tuple_id_ = header.at("next_tuple_id").get<std::uint64_t>();
    store.next_ticket_id_ = header.at("next_ticket_id").get<std::uint64_t>();
    store.clock_ = header.at("clock").get<std::uint64_t>();
    store.frame_height_ = header.at("frame_height").get<int>();
    store.frame_width_ = header.at("frame_width").get<int>();
    if (store.frame_height_ != height || store.frame_width_ != width) throw StoreError("manifest/blob frame size differ");

    while (std::getline(lines, line)) {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "segment") {
        auto seg = std::make_shared<Segment>();
        seg->id = j.at("id").get<std::uint64_t>();
        seg->episode_id = j.at("episode_id").get<std::uint64_t>();
        seg->start_index = j.at("start_index").get<std::uint32_t>();
        seg->pool = j.at("pool").get<std::string>() == "heldout" ? SegmentPool::heldout : SegmentPool::train;
        seg->action_dim = j.at("action_dim").get<int>();
        seg->actions = j.at("actions").get<std::vector<double>>();
        if (!j.at("true_rewards").is_null()) seg->true_rewards = j.at("true_rewards").get<std::vector<double>>();
        const std::uint64_t index = j.at("blob_index").get<std::uint64_t>();
        if (index >= count) throw StoreError("segment references a missing blob entry");
        if (seg->id != store.segments_.size() + 1) throw StoreError("segment ids are not contiguous");
        std::size_t at = data_start + offsets[index];
        if (at + seg_len * frame_bytes > blob.size() - 4) throw StoreError("frame blob truncated");
        for (std::uint32_t t = 0; t < seg_len; ++t) {
          Frame f(height, width);
          std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(at), frame_bytes, f.pixels.begin());
          at += frame_bytes;
          seg->frames.push_back(std::move(f));
        }
        store.segments_.push_back(std::move(seg));
      } else if (type == "tuple") {
        store.tuples_.push_back(tuple_from(j));
      } else if (type == "heldout_tuple") {
        store.heldout_.push_back(tuple_from(j));
      } else if (type == "ticket") {
        store.tickets_.push_back({j.at("ticket_id").get<std::uint64_t>(), j.at("seg0").get<std::uint64_t>(),
                                  j.at("seg1").get<std::uint64_t>(), j.at("issued_at").get<std::uint64_t>(),
                                  parse_status(j.at("status").get<std::string>())});
      } else {
        throw StoreError("unknown manifest record type '" + type + "'");
      }
    }
    if (store.segments_.size() != count) throw StoreError("manifest/blob segment count differ");
    return store;
  } catch (const json::exception& e) {
    throw StoreError(std::string("malformed store manifest: ") + e.what());
  }
}

}  // namespace prefforge::prefstore
