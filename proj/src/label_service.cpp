#include "prefforge/label_service.hpp"

#include <httplib.h>

namespace prefforge::service {

using nlohmann::json;

namespace {

json segment_payload(const prefstore::Segment& seg) {
  json frames = json::array();
  for (const Frame& f : seg.frames) frames.push_back(base64_encode(encode_pgm(f)));
  return {{"segment_id", seg.id}, {"length", seg.frames.size()}, {"format", "pgm/base64"}, {"frames", frames}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error(httplib::Response& res, int status, const std::string& msg) { reply(res, status, {{"error", msg}}); }

int status_for(prefstore::TicketError::Kind kind) {
  using K = prefstore::TicketError::Kind;
  switch (kind) {
    case K::unknown: return 404;
    case K::already_answered: return 409;
    case K::expired:
    case K::budget_exhausted: return 410;
    case K::bad_label: return 400;
  }
  return 500;
}

}  // namespace

json api_query(const prefstore::PreferenceStore& store, const prefstore::QueryTicket& ticket) {
  const auto first = store.segment(ticket.seg0);
  const auto second = store.segment(ticket.seg1);
  return {{"ticket_id", ticket.ticket_id},
          {"segment_length", store.config().segment_length},
          {"first", segment_payload(*first)},
          {"second", segment_payload(*second)}};
}

LabelService::LabelService(prefstore::PreferenceStore& store, std::optional<std::filesystem::path> persist_dir)
    : store_(store), persist_dir_(std::move(persist_dir)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

LabelService::~LabelService() { stop(); }

void LabelService::routes() {
  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });

  server_->Get("/status", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200,
          {{"budget_remaining", store_.feedback_budget_remaining()},
           {"budget_cap", store_.config().budget_cap},
           {"answered", store_.answered_count()},
           {"pending", store_.pending_tickets().size()},
           {"segments", store_.segment_count(prefstore::SegmentPool::train)},
           {"heldout_pairs", store_.heldout_tuples().size()}});
  });

  server_->Get("/queries/next", [this](const httplib::Request&, httplib::Response& res) {
    const auto ticket = store_.next_pending();
    if (!ticket) {
      res.status = 204;
      return;
    }
    reply(res, 200, api_query(store_, *ticket));
  });

  server_->Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return error(res, 400, "body must be a JSON object");
    if (!body.contains("ticket_id") || !body["ticket_id"].is_number_unsigned()) {
      return error(res, 400, "ticket_id must be a non-negative integer");
    }
    if (!body.contains("y") || !body["y"].is_number_integer()) return error(res, 400, "y must be 0 or 1");
    if (body.contains("source") && body["source"] != "human") return error(res, 400, "source must be \"human\"");
    const auto ticket_id = body["ticket_id"].get<std::uint64_t>();
    const auto y = body["y"].get<std::int64_t>();
    if (y != 0 && y != 1) return error(res, 400, "y must be 0 or 1");
    try {
      const auto tuple = store_.answer_ticket(ticket_id, static_cast<int>(y), prefstore::LabelSource::human);
      if (persist_dir_) {
        std::lock_guard lock(persist_mutex_);
        store_.save(*persist_dir_);
      }
      reply(res, 201, {{"tuple_id", tuple.id}, {"ticket_id", ticket_id}});
    } catch (const prefstore::TicketError& e) {
      error(res, status_for(e.kind()), e.what());
    }
  });
}

bool LabelService::listen(const std::string& host, int port) { return server_->listen(host, port); }

int LabelService::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool LabelService::serve() { return server_->listen_after_bind(); }

void LabelService::stop() {
  if (server_) server_->stop();
}

void LabelService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace prefforge::service
