#include "medledger/service/http.hpp"

#include <charconv>
#include <cmath>

#include "httplib.h"
#include "json.hpp"

namespace medledger::service {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ApiError(400, "BadRequest", "body must be a JSON object");
  return j;
}

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) throw ApiError(400, "BadRequest", std::string("missing field ") + name);
  return *it;
}

std::string get_string(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw ApiError(400, "BadRequest", std::string(name) + " must be a string");
  return v.get<std::string>();
}

std::uint64_t get_u64(const json& j, const char* name, const char* code = "BadRequest") {
  const json& v = field(j, name);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && d < 1.8e19 && std::floor(d) == d) return static_cast<std::uint64_t>(d);
  }
  throw ApiError(400, code, std::string(name) + " must be a non-negative integer");
}

double get_number(const json& j, const char* name, const char* code) {
  const json& v = field(j, name);
  if (!v.is_number()) throw ApiError(400, code, std::string(name) + " must be a number");
  return v.get<double>();
}

Digest get_digest(const json& j, const char* name) {
  try {
    return Digest::from_hex(get_string(j, name));
  } catch (const ApiError&) {
    throw;
  } catch (const std::exception&) {
    throw ApiError(400, "BadRequest", std::string(name) + " must be 64 hex characters");
  }
}

std::uint64_t path_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ApiError(400, "BadRequest", "bad patient_id");
  return v;
}

vault::PatientRecord record_from_json(const json& j) {
  constexpr const char* kInvalid = "InvalidRecord";
  vault::PatientRecord r;
  const json& name = field(j, "username");
  if (!name.is_string()) throw ApiError(400, kInvalid, "username must be a string");
  r.username = name.get<std::string>();
  const std::uint64_t age = get_u64(j, "age", kInvalid);
  if (age > vault::kMaxAge) throw ApiError(400, kInvalid, "age out of range");
  r.age = static_cast<std::uint32_t>(age);
  r.temperature = get_number(j, "temperature", kInvalid);
  r.time = get_number(j, "time", kInvalid);
  r.patient_id = get_u64(j, "patient_id", kInvalid);
  if (auto it = j.find("extra"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ApiError(400, kInvalid, "extra must be an object of strings");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw ApiError(400, kInvalid, "extra values must be strings");
      r.extra[k] = v.get<std::string>();
    }
  }
  return r;
}

json to_json(const vault::PatientRecord& r) {
  return {{"username", r.username},
          {"age", r.age},
          {"temperature", r.temperature},
          {"time", r.time},
          {"patient_id", r.patient_id},
          {"extra", r.extra}};
}

json tx_result_json(const TxResult& t) {
  json out{{"tx_id", t.tx_id.hex()}, {"committed", t.block_index.has_value()}};
  if (t.block_index) out["block_index"] = *t.block_index;
  return out;
}

int tx_status(const TxResult& t) { return t.block_index ? 200 : 202; }

json identity_json(const policy::Identity& i) {
  return {{"identity_id", i.identity_id.hex()},
          {"display_name", i.display_name},
          {"role", chain::to_string(i.role)},
          {"public_key", to_hex(i.public_key)},
          {"registered_in_block", i.registered_in_block}};
}

json appointment_json(const policy::AppointmentEntry& a) {
  return {{"tx_id", a.tx_id.hex()},   {"block_index", a.block_index}, {"patient_id", a.patient_id},
          {"provider_id", a.provider_id.hex()}, {"author_id", a.author_id.hex()}, {"slot_ms", a.slot_ms},
          {"note", a.note}};
}

json report_json(const chain::VerificationReport& r, std::size_t length) {
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"block_index", f.block_index}, {"reason", chain::to_string(f.reason)}});
  }
  return {{"ok", r.ok}, {"length", length}, {"failures", failures}};
}

std::string bearer(const httplib::Request& req) {
  const std::string h = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (h.size() > kPrefix.size() && h.compare(0, kPrefix.size(), kPrefix) == 0) return h.substr(kPrefix.size());
  return {};
}

}  // namespace

struct HttpServer::Impl {
  EhrService& svc;
  httplib::Server server;

  explicit Impl(EhrService& s) : svc(s) { routes(); }

  Session session(const httplib::Request& req) const { return svc.authenticate(bearer(req)); }

  template <class F>
  httplib::Server::Handler wrap(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ApiError& e) {
        send_error(res, e.status(), e.code(), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "BadRequest", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  void routes() {
    server.Get("/api/health", wrap([this](const auto&, auto& res) {
      const chain::Chain c = svc.chain_snapshot();
      send_json(res, 200,
                {{"ok", true},
                 {"length", c.length()},
                 {"tip", c.tip_digest().hex()},
                 {"pending", svc.pending_count()},
                 {"difficulty_bits", svc.config().difficulty_bits},
                 {"auto_mine", svc.config().auto_mine}});
    }));

    server.Get("/api/challenge", wrap([this](const auto&, auto& res) {
      const Challenge c = svc.challenge();
      send_json(res, 200, {{"challenge", to_hex(c.nonce)}, {"expires_at_ms", c.expires_at_ms}});
    }));

    server.Post("/api/login", wrap([this](const auto& req, auto& res) {
      const json body = parse_body(req);
      const Session s = svc.login(get_string(body, "username"), get_string(body, "challenge"),
                                  get_string(body, "signature"));
      const policy::Identity who = svc.identity_of(s);
      send_json(res, 200,
                {{"token", s.token},
                 {"identity_id", who.identity_id.hex()},
                 {"display_name", who.display_name},
                 {"role", chain::to_string(who.role)},
                 {"expires_at_ms", s.issued_at_ms + s.ttl_ms}});
    }));

    server.Get("/api/me", wrap([this](const auto& req, auto& res) {
      send_json(res, 200, identity_json(svc.identity_of(session(req))));
    }));

    server.Post("/api/identities", wrap([this](const auto& req, auto& res) {
      const json body = parse_body(req);
      RegisterRequest r;
      r.display_name = get_string(body, "display_name");
      try {
        r.role = chain::parse_role(get_string(body, "role"));
      } catch (const std::invalid_argument&) {
        throw ApiError(400, "BadRequest", "role must be patient, provider or admin");
      }
      if (auto it = body.find("seed"); it != body.end() && !it->is_null()) {
        Bytes seed;
        try {
          seed = from_hex(it->get<std::string>());
        } catch (const std::exception&) {
        }
        if (seed.size() != 32) throw ApiError(400, "BadRequest", "seed must be 64 hex characters");
        r.seed.emplace();
        std::copy(seed.begin(), seed.end(), r.seed->begin());
      }
      std::optional<Session> caller;
      if (!bearer(req).empty()) caller = session(req);
      const RegisterResult out = svc.register_identity(caller, r);
      json j = tx_result_json({out.tx_id, out.block_index});
      j["identity_id"] = out.identity_id.hex();
      if (out.generated_seed) j["seed"] = to_hex(*out.generated_seed);
      send_json(res, out.block_index ? 200 : 202, j);
    }));

    server.Post("/api/records", wrap([this](const auto& req, auto& res) {
      const Session s = session(req);
      const SubmitResult out = svc.submit_record(s, record_from_json(parse_body(req)));
      json j{{"status", out.status}, {"content_address", out.content_address.hex()}, {"tx_id", out.tx_id.hex()}};
      if (out.block_index) j["block_index"] = *out.block_index;
      send_json(res, out.block_index ? 200 : 202, j);
    }));

    server.Get(R"(/api/records/(\d+))", wrap([this](const auto& req, auto& res) {
      const Session s = session(req);
      const std::uint64_t pid = path_u64(req.matches[1]);
      json list = json::array();
      for (const auto& r : svc.records(s, pid)) {
        json j = to_json(r.record);
        j["content_address"] = r.content_address.hex();
        j["block_index"] = r.block_index;
        j["tx_id"] = r.tx_id.hex();
        j["author_id"] = r.author_id.hex();
        list.push_back(std::move(j));
      }
      send_json(res, 200, {{"patient_id", pid}, {"records", list}});
    }));

    server.Post("/api/grants", wrap([this](const auto& req, auto& res) {
      const Session s = session(req);
      const json body = parse_body(req);
      chain::Scope scope = chain::Scope::Read;
      if (auto it = body.find("scope"); it != body.end()) {
        try {
          scope = chain::parse_scope(it->get<std::string>());
        } catch (const std::invalid_argument&) {
          throw ApiError(400, "BadRequest", "scope must be read or read_write");
        }
      }
      std::optional<std::uint64_t> expires;
      if (auto it = body.find("expires_at_ms"); it != body.end() && !it->is_null()) {
        expires = get_u64(body, "expires_at_ms");
      }
      const TxResult t =
          svc.grant(s, get_u64(body, "patient_id"), get_digest(body, "grantee_id"), scope, expires);
      send_json(res, tx_status(t), tx_result_json(t));
    }));

    server.Post("/api/revokes", wrap([this](const auto& req, auto& res) {
      const Session s = session(req);
      const json body = parse_body(req);
      const TxResult t = svc.revoke(s, get_u64(body, "patient_id"), get_digest(body, "grantee_id"));
      send_json(res, tx_status(t), tx_result_json(t));
    }));

    server.Post("/api/appointments", wrap([this](const auto& req, auto& res) {
      const Session s = session(req);
      const json body = parse_body(req);
      std::string note;
      if (auto it = body.find("note"); it != body.end() && !it->is_null()) note = get_string(body, "note");
      const TxResult t = svc.book_appointment(s, get_u64(body, "patient_id"), get_digest(body, "provider_id"),
                                              get_u64(body, "slot_ms"), note);
      send_json(res, tx_status(t), tx_result_json(t));
    }));

    server.Get("/api/appointments", wrap([this](const auto& req, auto& res) {
      json list = json::array();
      for (const auto& a : svc.appointments(session(req))) list.push_back(appointment_json(a));
      send_json(res, 200, {{"appointments", list}});
    }));

    server.Get("/api/providers", wrap([this](const auto& req, auto& res) {
      session(req);
      json list = json::array();
      for (const auto& p : svc.providers()) list.push_back(identity_json(p));
      send_json(res, 200, {{"providers", list}});
    }));

    server.Get("/api/chain/verify", wrap([this](const auto& req, auto& res) {
      session(req);
      const auto report = svc.verify_persisted();
      send_json(res, 200, report_json(report, svc.chain_snapshot().length()));
    }));

    // Open like any PoW miner: it only seals transactions already validated
    // into the pool, and a first registration must be mineable before anyone
    // can log in.
    server.Post("/api/mine", wrap([this](const auto&, auto& res) {
      const MineResult m = svc.mine();
      json dropped = json::array();
      for (const auto& d : m.dropped) dropped.push_back(d.hex());
      send_json(res, 200,
                {{"block_index", m.block_index},
                 {"digest", m.digest.hex()},
                 {"tx_count", m.tx_count},
                 {"attempts", m.attempts},
                 {"dropped", dropped}});
    }));

    server.Get(R"(/api/audit/(\d+))", wrap([this](const auto& req, auto& res) {
      const Session s = session(req);
      const std::uint64_t pid = path_u64(req.matches[1]);
      const AuditReport report = svc.audit(s, pid);
      json entries = json::array();
      for (const auto& e : report.entries) {
        entries.push_back({{"block_index", e.block_index},
                           {"tx_index", e.tx_index},
                           {"tx_id", e.tx_id.hex()},
                           {"kind", e.kind},
                           {"summary", e.summary}});
      }
      json access = json::array();
      for (const auto& a : report.access) {
        access.push_back({{"at_ms", a.at_ms},
                          {"requester", a.requester.hex()},
                          {"action", policy::to_string(a.action)},
                          {"allowed", a.decision.allowed},
                          {"reason", policy::to_string(a.decision.reason)},
                          {"endpoint", a.endpoint}});
      }
      send_json(res, 200, {{"patient_id", pid}, {"entries", entries}, {"access", access}});
    }));

    server.Get("/api/state", wrap([this](const auto& req, auto& res) {
      if (!svc.config().test_hooks) {
        if (svc.identity_of(session(req)).role != chain::Role::Admin) {
          throw ApiError(403, "AdminRequired", "state dump is admin-only");
        }
      }
      res.set_content(svc.state_dump(), "text/plain");
    }));

    server.Get("/api/chain", wrap([this](const auto& req, auto& res) {
      session(req);
      const chain::Chain c = svc.chain_snapshot();
      json blocks = json::array();
      for (const auto& b : c.blocks) {
        json txs = json::array();
        for (const auto& tx : b.transactions) {
          txs.push_back({{"tx_id", tx.tx_id.hex()}, {"kind", chain::kind_name(tx.body)}, {"summary", chain::summarize(tx)}});
        }
        blocks.push_back({{"index", b.header.index},
                          {"digest", b.digest().hex()},
                          {"prev_hash", b.header.prev_hash.hex()},
                          {"tx_root", b.header.tx_root.hex()},
                          {"timestamp_ms", b.header.timestamp_ms},
                          {"difficulty_bits", b.header.difficulty_bits},
                          {"nonce", b.header.nonce},
                          {"transactions", txs}});
      }
      send_json(res, 200, {{"length", c.length()}, {"blocks", blocks}});
    }));

    server.Post("/api/test/corrupt", wrap([this](const auto& req, auto& res) {
      if (!svc.config().test_hooks) throw ApiError(404, "NotFound", "test hooks are disabled");
      const std::uint64_t index = get_u64(parse_body(req), "block_index");
      svc.corrupt_persisted_block(index);
      send_json(res, 200, {{"corrupted", index}});
    }));

    if (const auto& dir = svc.config().webui_dir) {
      server.set_mount_point("/app", dir->string());
      server.Get("/", [](const auto&, auto& res) { res.set_redirect("/app/"); });
    }
  }
};

HttpServer::HttpServer(EhrService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace medledger::service
