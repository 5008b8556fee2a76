#include "homedqn/live_server.hpp"

#include <spdlog/spdlog.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>

#include "homedqn/live_service.hpp"

namespace homedqn {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, LiveService& service)
      : ws_(std::move(socket)), service_(service) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return spdlog::warn("websocket handshake failed: {}", ec.message());
      self->read();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        if (ec != websocket::error::closed) spdlog::info("connection ended: {}", ec.message());
        return;
      }
      const auto text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      for (auto& reply : self->service_.handle_text(self->conn_, text)) {
        self->queue_.push_back(std::move(reply));
      }
      if (self->queue_.size() > 0 && !self->writing_) self->write();
      self->read();
    });
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) return spdlog::info("write failed: {}", ec.message());
                      self->queue_.pop_front();
                      self->writing_ = false;
                      if (!self->queue_.empty()) self->write();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  LiveService& service_;
  LiveConnection conn_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool writing_ = false;
};

}  // namespace

struct LiveServer::Impl {
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  LiveService service;
  std::unique_ptr<asio::signal_set> signals;

  explicit Impl(PhaseConfig cfg) : service(std::move(cfg)) {}

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != asio::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
        return;
      }
      std::make_shared<Connection>(std::move(socket), service)->start();
      accept();
    });
  }
};

LiveServer::LiveServer(PhaseConfig cfg, unsigned short port, const std::string& address)
    : impl_(std::make_unique<Impl>(std::move(cfg))) {
  const tcp::endpoint endpoint{asio::ip::make_address(address), port};
  auto& a = impl_->acceptor;
  a.open(endpoint.protocol());
  a.set_option(asio::socket_base::reuse_address(true));
  a.bind(endpoint);
  a.listen(asio::socket_base::max_listen_connections);
}

LiveServer::~LiveServer() = default;

unsigned short LiveServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void LiveServer::run() {
  impl_->accept();
  impl_->ioc.run();
}

void LiveServer::stop_on_signals() {
  impl_->signals = std::make_unique<asio::signal_set>(impl_->ioc, SIGINT, SIGTERM);
  impl_->signals->async_wait([this](beast::error_code ec, int) {
    if (!ec) stop();
  });
}

void LiveServer::stop() {
  asio::post(impl_->ioc, [this] {
    beast::error_code ignored;
    impl_->acceptor.close(ignored);
    impl_->ioc.stop();
  });
}

int run_live_server(const PhaseConfig& cfg, unsigned short port, const std::string& address) {
  LiveServer server(cfg, port, address);
  server.stop_on_signals();
  spdlog::info("serving on ws://{}:{}", address, server.port());
  server.run();
  return 0;
}

}  // namespace homedqn
