#pragma once

#include "onlc/service.hpp"

#include <memory>
#include <string>

namespace onlc {

//! JSON API under /v1 backed by a Service.
//!
//! Error bodies are {"error": {"code": ..., "message": ...}} with status
//! 404 (unknown resource), 409 (conflicting state), 422 (invalid input),
//! 412 (missing precondition) or 401 (bad token).
class HttpApi {
public:
    explicit HttpApi(Service &service);
    ~HttpApi();

    HttpApi(const HttpApi &) = delete;
    HttpApi &operator=(const HttpApi &) = delete;

    //! Binds and serves until stop(). Returns false when binding fails.
    bool listen(const std::string &host, int port);
    //! Binds an ephemeral port and returns it, or -1.
    int bind_any(const std::string &host);
    //! Serves on a socket bound by bind_any().
    bool serve();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace onlc
