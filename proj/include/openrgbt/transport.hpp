#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "openrgbt/backend.hpp"
#include "openrgbt/protocol.hpp"

namespace openrgbt {

inline constexpr std::chrono::milliseconds kDefaultBackendTimeout{60'000};

/// Carries one request line to a backend and returns its response line.
/// Failures throw BackendError with `transient() == true`.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual std::string exchange(const std::string& request_id, const std::string& line) = 0;
    virtual std::string describe() const = 0;
};

/// Child process speaking JSON lines on stdin/stdout. The child is started
/// lazily and restarted after any failure. One request in flight at a time.
class ProcessTransport : public Transport {
  public:
    ProcessTransport(std::string command, std::chrono::milliseconds timeout = kDefaultBackendTimeout);
    ~ProcessTransport() override;

    ProcessTransport(const ProcessTransport&) = delete;
    ProcessTransport& operator=(const ProcessTransport&) = delete;

    std::string exchange(const std::string& request_id, const std::string& line) override;
    std::string describe() const override { return "process:" + command_; }

  private:
    void start();
    void stop() noexcept;

    std::string command_;
    std::chrono::milliseconds timeout_;
    int fd_ = -1;
    int pid_ = -1;
    std::string buffer_;
};

/// HTTP POST of the same JSON document to a fixed URL.
class HttpTransport : public Transport {
  public:
    explicit HttpTransport(std::string url, std::chrono::milliseconds timeout = kDefaultBackendTimeout);

    std::string exchange(const std::string& request_id, const std::string& line) override;
    std::string describe() const override { return url_; }

  private:
    std::string url_;
    std::string origin_;
    std::string path_;
    std::chrono::milliseconds timeout_;
};

/// `process:<shell command>` or `http://host:port/path`.
std::unique_ptr<Transport> make_transport(const std::string& endpoint,
                                          std::chrono::milliseconds timeout = kDefaultBackendTimeout);

struct RetryPolicy {
    int retries = 2;
    std::chrono::milliseconds initial_backoff{200};
};

/// Client side of the wire protocol. Transport errors are retried with
/// exponential backoff; error responses are not. The handshake runs on first
/// use and fixes the embedding dimension for the session.
class RemoteBackend : public ModelBackend {
  public:
    explicit RemoteBackend(std::unique_ptr<Transport> transport, RetryPolicy retry = {});

    std::vector<std::string> capabilities() override;
    std::size_t embedding_dim() override;

    std::vector<RawDetection> detect_text(const std::string& image_id, const Raster& image,
                                          const std::vector<std::string>& classes) override;
    std::vector<RawDetection> detect_visual(const std::string& image_id, const Raster& image,
                                            std::span<const VisualPrompt> prompts) override;
    std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) override;
    std::vector<std::vector<double>> embed_crops(const std::string& image_id,
                                                 std::span<const CropInput> crops) override;
    std::vector<MaskResult> segment(const std::string& image_id, const Raster& image,
                                    std::span<const Box> boxes) override;
    WeightMap fusion_weights(const ImagePair& pair) override;

    std::size_t requests_sent() const noexcept { return counter_; }

  private:
    protocol::Response call(protocol::RequestBody body);
    protocol::Response call_locked(protocol::RequestBody body);
    void ensure_handshake_locked();
    std::vector<std::vector<double>> checked_embeddings(protocol::Response response, const std::string& id,
                                                        std::size_t expected);

    std::unique_ptr<Transport> transport_;
    RetryPolicy retry_;
    std::mutex mutex_;
    std::size_t counter_ = 0;
    bool handshake_done_ = false;
    protocol::HelloResult hello_;
};

} // namespace openrgbt
