#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "medledger/service/http.hpp"
#include "service_fixture.hpp"

using namespace medledger;
using namespace medledger::service;
using nlohmann::json;
using medledger::testing::service_config;
using medledger::testing::TempDir;

namespace {

// Service plus HTTP front end on an ephemeral port.
class Running {
 public:
  explicit Running(ServiceConfig cfg) : svc_(std::move(cfg)), http_(svc_) {
    port_ = http_.bind("127.0.0.1", 0);
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { http_.serve(); });
    http_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  ~Running() {
    http_.stop();
    thread_.join();
  }

  struct Reply {
    int status = 0;
    json body;
    std::string raw;
  };

  Reply call(const std::string& method, const std::string& path, const json& body = nullptr,
             const std::string& token = {}) {
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    httplib::Result r = method == "GET" ? client_->Get(path, headers)
                                        : client_->Post(path, headers, body.is_null() ? "" : body.dump(),
                                                        "application/json");
    REQUIRE(r);
    Reply out{r->status, json::parse(r->body, nullptr, false), r->body};
    return out;
  }

  std::string login(const std::string& user, const KeyPair& key) {
    const Reply c = call("GET", "/api/challenge");
    REQUIRE(c.status == 200);
    const Bytes nonce = from_hex(c.body["challenge"].get<std::string>());
    std::array<std::uint8_t, 32> n{};
    std::copy(nonce.begin(), nonce.end(), n.begin());
    const Reply r = call("POST", "/api/login",
                         {{"username", user},
                          {"challenge", c.body["challenge"]},
                          {"signature", to_hex(key.sign(login_message(n)))}});
    REQUIRE(r.status == 200);
    return r.body["token"].get<std::string>();
  }

 private:
  EhrService svc_;
  HttpServer http_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_CASE("REST flow for the dashboard sample record") {
  TempDir dir;
  Running srv(service_config(dir));

  auto reg = srv.call("POST", "/api/identities", {{"display_name", "hanu"}, {"role", "patient"}});
  REQUIRE(reg.status == 200);
  const KeyPair hanu_key = [&] {
    const Bytes seed = from_hex(reg.body["seed"].get<std::string>());
    Seed s{};
    std::copy(seed.begin(), seed.end(), s.begin());
    return KeyPair::from_seed(s);
  }();
  CHECK(reg.body["identity_id"] == chain::identity_id(hanu_key.public_key()).hex());
  const std::string token = srv.login("hanu", hanu_key);

  const json record{{"username", "hanu"}, {"age", 20}, {"temperature", 100}, {"time", 20.8}, {"patient_id", 52}};
  auto posted = srv.call("POST", "/api/records", record, token);
  CHECK(posted.status == 200);
  CHECK(posted.body["status"] == "Data Successfully stored into Block chain");
  CHECK(posted.body["content_address"].get<std::string>().size() == 64);

  auto fetched = srv.call("GET", "/api/records/52", nullptr, token);
  REQUIRE(fetched.status == 200);
  REQUIRE(fetched.body["records"].size() == 1);
  const json& got = fetched.body["records"][0];
  CHECK(got["username"] == "hanu");
  CHECK(got["age"] == 20);
  CHECK(got["temperature"] == 100.0);
  CHECK(got["time"] == 20.8);
  CHECK(got["patient_id"] == 52);
  CHECK(got["content_address"] == posted.body["content_address"]);

  auto bad_age = srv.call("POST", "/api/records",
                          {{"username", "hanu"}, {"age", -1}, {"temperature", 100}, {"time", 20.8}, {"patient_id", 52}},
                          token);
  CHECK(bad_age.status == 400);
  CHECK(bad_age.body["code"] == "InvalidRecord");

  auto verify = srv.call("GET", "/api/chain/verify", nullptr, token);
  CHECK(verify.status == 200);
  CHECK(verify.body["ok"] == true);
  CHECK(verify.body["failures"].empty());

  auto audit = srv.call("GET", "/api/audit/52", nullptr, token);
  CHECK(audit.status == 200);
  CHECK(audit.body["entries"].size() == 2);

  auto chain = srv.call("GET", "/api/chain", nullptr, token);
  CHECK(chain.body["length"] == 3);
  CHECK(chain.body["blocks"][2]["transactions"][0]["kind"] == "RecordAnchor");
}

TEST_CASE("REST grants, appointments and errors") {
  TempDir dir;
  Running srv(service_config(dir));
  const KeyPair pk = medledger::testing::key_for("rest:patient");
  const KeyPair dk = medledger::testing::key_for("rest:doctor");
  REQUIRE(srv.call("POST", "/api/identities", {{"display_name", "pat"}, {"role", "patient"}, {"seed", to_hex(pk.seed())}})
              .status == 200);
  REQUIRE(srv.call("POST", "/api/identities", {{"display_name", "doc"}, {"role", "provider"}, {"seed", to_hex(dk.seed())}})
              .status == 200);
  const std::string pt = srv.login("pat", pk);
  const std::string dt = srv.login("doc", dk);
  const std::string doc_id = chain::identity_id(dk.public_key()).hex();

  const json record{{"username", "pat"}, {"age", 40}, {"temperature", 98.6}, {"time", 9.5}, {"patient_id", 7}};
  REQUIRE(srv.call("POST", "/api/records", record, pt).status == 200);

  auto denied = srv.call("GET", "/api/records/7", nullptr, dt);
  CHECK(denied.status == 403);
  CHECK(denied.body["code"] == "NoGrant");

  auto g = srv.call("POST", "/api/grants", {{"patient_id", 7}, {"grantee_id", doc_id}, {"scope", "read"}}, pt);
  CHECK(g.status == 200);
  CHECK(g.body["committed"] == true);
  CHECK(srv.call("GET", "/api/records/7", nullptr, dt).status == 200);
  auto not_owner = srv.call("POST", "/api/grants", {{"patient_id", 7}, {"grantee_id", doc_id}}, dt);
  CHECK(not_owner.status == 403);
  CHECK(not_owner.body["code"] == "NotOwner");
  CHECK(srv.call("POST", "/api/revokes", {{"patient_id", 7}, {"grantee_id", doc_id}}, pt).status == 200);
  CHECK(srv.call("GET", "/api/records/7", nullptr, dt).status == 403);

  auto providers = srv.call("GET", "/api/providers", nullptr, pt);
  REQUIRE(providers.body["providers"].size() == 1);
  CHECK(providers.body["providers"][0]["identity_id"] == doc_id);
  auto appt = srv.call("POST", "/api/appointments",
                       {{"patient_id", 7}, {"provider_id", doc_id}, {"slot_ms", 1800000000000ULL}, {"note", "checkup"}}, pt);
  CHECK(appt.status == 200);
  auto listed = srv.call("GET", "/api/appointments", nullptr, pt);
  REQUIRE(listed.body["appointments"].size() == 1);
  CHECK(listed.body["appointments"][0]["note"] == "checkup");
  auto bad_provider = srv.call("POST", "/api/appointments",
                               {{"patient_id", 7}, {"provider_id", std::string(64, 'a')}, {"slot_ms", 1}}, pt);
  CHECK(bad_provider.status == 400);

  CHECK(srv.call("GET", "/api/records/7").status == 401);
  CHECK(srv.call("GET", "/api/records/7", nullptr, "nope").body["code"] == "BadToken");
  CHECK(srv.call("POST", "/api/records", nullptr, pt).status == 400);
  CHECK(srv.call("POST", "/api/grants", {{"patient_id", 7}}, pt).status == 400);
  auto nothing = srv.call("POST", "/api/mine", nullptr, pt);
  CHECK(nothing.status == 409);
  CHECK(nothing.body["code"] == "NothingToMine");

  // Corruption hook, then the integrity endpoint reports the damaged block.
  CHECK(srv.call("POST", "/api/test/corrupt", {{"block_index", 2}}).status == 200);
  auto verify = srv.call("GET", "/api/chain/verify", nullptr, pt);
  CHECK(verify.body["ok"] == false);
  std::set<std::string> reasons;
  for (const json& f : verify.body["failures"]) {
    CHECK(f["block_index"] == 2);
    reasons.insert(f["reason"].get<std::string>());
  }
  CHECK(reasons.count("BadSignature") == 1);
}

TEST_CASE("REST with auto_mine off queues until /api/mine") {
  TempDir dir;
  ServiceConfig cfg = service_config(dir, 12, false);
  cfg.test_hooks = false;
  Running srv(cfg);
  const KeyPair pk = medledger::testing::key_for("rest:queued");
  auto reg = srv.call("POST", "/api/identities", {{"display_name", "q"}, {"role", "patient"}, {"seed", to_hex(pk.seed())}});
  CHECK(reg.status == 202);
  CHECK(reg.body["committed"] == false);
  CHECK(srv.call("POST", "/api/mine").body["tx_count"] == 1);
  const std::string t = srv.login("q", pk);

  const json record{{"username", "q"}, {"age", 1}, {"temperature", 97}, {"time", 1}, {"patient_id", 3}};
  auto queued = srv.call("POST", "/api/records", record, t);
  CHECK(queued.status == 202);
  CHECK(queued.body["status"] == "Queued for mining");
  auto mined = srv.call("POST", "/api/mine", nullptr, t);
  REQUIRE(mined.status == 200);
  CHECK(mined.body["tx_count"] == 1);
  CHECK(chain::meets_difficulty(Digest::from_hex(mined.body["digest"].get<std::string>()), 12));
  CHECK(srv.call("GET", "/api/records/3", nullptr, t).status == 200);
  CHECK(srv.call("POST", "/api/test/corrupt", {{"block_index", 1}}).status == 404);
  CHECK(srv.call("GET", "/api/state", nullptr, t).status == 403);
}
