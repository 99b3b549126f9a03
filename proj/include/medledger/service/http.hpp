#pragma once

#include <memory>
#include <string>

#include "medledger/service/service.hpp"

namespace medledger::service {

// REST front end over an EhrService. See docs/openapi.yaml.
class HttpServer {
 public:
  explicit HttpServer(EhrService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds without serving; port 0 picks a free port. Returns the bound port
  // or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace medledger::service
