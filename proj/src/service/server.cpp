#include "flipfree/service.hpp"

#include "flipfree/protocol.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <deque>
#include <thread>

#ifndef FLIPFREE_VERSION
#define FLIPFREE_VERSION "unknown"
#endif

namespace flipfree {

std::string build_version() { return FLIPFREE_VERSION; }

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct Shared {
  DeformSession& session;
  ServiceOptions options;
  std::atomic<std::uint64_t> next_id{1};
  std::atomic<std::uint64_t> active_id{0};
};

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, Shared& shared)
      : ws_(std::move(socket)), shared_(shared), id_(shared.next_id++) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->on_accept();
    });
  }

 private:
  void on_accept() {
    shared_.active_id = id_;
    std::weak_ptr<WsConnection> weak = weak_from_this();
    auto executor = ws_.get_executor();
    const std::size_t threshold = shared_.options.binary_threshold;
    // Called from the session under its lock; encode there, write here.
    auto [status, update] = shared_.session.attach([weak, executor, threshold](const SessionEvent& event) {
      net::post(executor, [weak, msg = encode_event(event, threshold)]() mutable {
        if (auto self = weak.lock()) self->enqueue(std::move(msg));
      });
    });
    enqueue(encode_mesh(shared_.session.mesh(), threshold));
    enqueue(encode_event(status, threshold));
    enqueue(encode_event(update, threshold));
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      if (shared_.active_id == id_) shared_.session.attach(nullptr);
      return;
    }
    if (!ws_.got_text()) {
      enqueue(encode_error("client messages must be JSON text frames"));
    } else if (auto error = dispatch_client_message(shared_.session, beast::buffers_to_string(buffer_.data()))) {
      enqueue(encode_error(*error));
    }
    buffer_.consume(buffer_.size());
    do_read();
  }

  // Latest update wins: a queued update not yet on the wire is replaced.
  void enqueue(OutgoingMessage msg) {
    const std::size_t in_flight = writing_ ? 1 : 0;
    if (msg.is_update && queue_.size() > in_flight && queue_.back().is_update) {
      queue_.back() = std::move(msg);
    } else {
      queue_.push_back(std::move(msg));
    }
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    const OutgoingMessage& msg = queue_.front();
    const bool binary_part = sent_text_;
    const std::string& data = binary_part ? *msg.binary : msg.text;
    ws_.text(!binary_part);
    ws_.async_write(net::buffer(data), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_write(ec);
    });
  }

  void on_write(beast::error_code ec) {
    if (ec) {
      writing_ = false;
      queue_.clear();
      return;
    }
    if (!sent_text_ && queue_.front().binary) {
      sent_text_ = true;
    } else {
      sent_text_ = false;
      queue_.pop_front();
    }
    if (queue_.empty()) {
      writing_ = false;
    } else {
      do_write();
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  Shared& shared_;
  const std::uint64_t id_;
  beast::flat_buffer buffer_;
  std::deque<OutgoingMessage> queue_;
  bool writing_ = false;
  bool sent_text_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, Shared& shared) : stream_(std::move(socket)), shared_(shared) {}

  void start() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/session") {
        stream_.expires_never();
        std::make_shared<WsConnection>(stream_.release_socket(), shared_)->start(std::move(req_));
        return;
      }
      respond(http::status::not_found, R"({"error":"websocket endpoint is /session"})");
      return;
    }
    if (req_.method() == http::verb::get && req_.target() == "/healthz") {
      respond(http::status::ok, nlohmann::json{{"status", "ok"}, {"version", build_version()}}.dump());
    } else {
      respond(http::status::not_found, R"({"error":"not found"})");
    }
  }

  void respond(http::status status, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "flipfree/" + build_version());
    res->set(http::field::content_type, "application/json");
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) {
        self->do_read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct DeformService::Impl {
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  // Must be destroyed before ioc; its worker posts into it.
  DeformSession session;
  Shared shared;
  std::thread thread;

  Impl(Mesh mesh, SolverConfig config, ServiceOptions options)
      : session(std::move(mesh), config, options.throttle), shared{session, options} {
    const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
    acceptor.open(endpoint.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen(net::socket_base::max_listen_connections);
    do_accept();
  }

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpConnection>(std::move(socket), shared)->start();
      do_accept();
    });
  }
};

DeformService::DeformService(Mesh mesh, SolverConfig config, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(mesh), config, std::move(options))) {}

DeformService::~DeformService() { stop(); }

unsigned short DeformService::port() const { return impl_->acceptor.local_endpoint().port(); }

DeformSession& DeformService::session() { return impl_->session; }

void DeformService::run() {
  net::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
  signals.async_wait([this](beast::error_code, int) { impl_->ioc.stop(); });
  impl_->ioc.run();
}

void DeformService::start() {
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void DeformService::stop() {
  impl_->session.attach(nullptr);
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace flipfree
