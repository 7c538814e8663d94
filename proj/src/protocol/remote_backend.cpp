#include <thread>

#include "openrgbt/error.hpp"
#include "openrgbt/transport.hpp"

namespace openrgbt {

using namespace protocol;

RemoteBackend::RemoteBackend(std::unique_ptr<Transport> transport, RetryPolicy retry)
    : transport_(std::move(transport)), retry_(retry) {
    if (!transport_) {
        throw ConfigError("remote backend needs a transport");
    }
}

Response RemoteBackend::call_locked(RequestBody body) {
    Request request{"r" + std::to_string(++counter_), std::move(body)};
    const std::string op = op_name(request.body);
    const std::string line = encode(request);
    auto backoff = retry_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        std::string reply;
        try {
            reply = transport_->exchange(request.id, line);
        } catch (const BackendError& e) {
            if (!e.transient() || attempt >= retry_.retries) {
                std::string what = e.what();
                const std::string prefix = "request " + request.id + ": ";
                if (what.rfind(prefix, 0) == 0) {
                    what.erase(0, prefix.size());
                }
                throw BackendError(request.id, what + " (after " + std::to_string(attempt + 1) + " attempts)",
                                   e.transient());
            }
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
            continue;
        }
        Response response;
        try {
            response = decode_response(reply, op);
        } catch (const InvalidInput& e) {
            throw BackendError(request.id, std::string("malformed response: ") + e.what(), false);
        }
        if (response.id != request.id) {
            throw BackendError(request.id, "response id '" + response.id + "' does not echo the request", false);
        }
        if (const auto* err = std::get_if<ErrorResult>(&response.body)) {
            throw BackendError(request.id, "backend error: " + err->message, false);
        }
        return response;
    }
}

void RemoteBackend::ensure_handshake_locked() {
    if (handshake_done_) {
        return;
    }
    Response r = call_locked(HelloRequest{});
    const auto* hello = std::get_if<HelloResult>(&r.body);
    if (hello == nullptr) {
        throw BackendError(r.id, "handshake returned an unexpected result", false);
    }
    hello_ = *hello;
    handshake_done_ = true;
}

Response RemoteBackend::call(RequestBody body) {
    std::lock_guard lock(mutex_);
    ensure_handshake_locked();
    return call_locked(std::move(body));
}

std::vector<std::string> RemoteBackend::capabilities() {
    std::lock_guard lock(mutex_);
    ensure_handshake_locked();
    return hello_.capabilities;
}

std::size_t RemoteBackend::embedding_dim() {
    std::lock_guard lock(mutex_);
    ensure_handshake_locked();
    return hello_.embedding_dim;
}

namespace {

template <typename T>
T expect(Response&& r) {
    if (auto* v = std::get_if<T>(&r.body)) {
        return std::move(*v);
    }
    throw BackendError(r.id, "unexpected result type for op " + r.op, false);
}

} // namespace

std::vector<RawDetection> RemoteBackend::detect_text(const std::string& image_id, const Raster& image,
                                                     const std::vector<std::string>& classes) {
    return expect<DetectResult>(call(DetectTextRequest{image_id, image, classes})).detections;
}

std::vector<RawDetection> RemoteBackend::detect_visual(const std::string& image_id, const Raster& image,
                                                       std::span<const VisualPrompt> prompts) {
    DetectVisualRequest req{image_id, image, {}};
    for (const auto& p : prompts) {
        req.prompts.push_back(PromptSpec{p.class_name, p.box, p.image ? std::optional<Raster>(*p.image) : std::nullopt});
    }
    return expect<DetectResult>(call(std::move(req))).detections;
}

std::vector<std::vector<double>> RemoteBackend::checked_embeddings(Response response, const std::string& id,
                                                                   std::size_t expected) {
    auto result = expect<EmbedResult>(std::move(response));
    if (result.embeddings.size() != expected) {
        throw BackendError(id, "expected " + std::to_string(expected) + " embeddings, got " +
                                   std::to_string(result.embeddings.size()), false);
    }
    for (const auto& e : result.embeddings) {
        if (e.size() != hello_.embedding_dim) {
            throw BackendError(id, "embedding of length " + std::to_string(e.size()) +
                                       " violates the declared dimension " + std::to_string(hello_.embedding_dim),
                               false);
        }
    }
    return std::move(result.embeddings);
}

std::vector<std::vector<double>> RemoteBackend::embed_texts(const std::vector<std::string>& texts) {
    Response r = call(EmbedTextsRequest{texts});
    const std::string id = r.id;
    return checked_embeddings(std::move(r), id, texts.size());
}

std::vector<std::vector<double>> RemoteBackend::embed_crops(const std::string& image_id,
                                                            std::span<const CropInput> crops) {
    EmbedCropsRequest req{image_id, {}};
    for (const auto& c : crops) {
        req.crops.push_back(CropSpec{c.box, c.crop});
    }
    Response r = call(std::move(req));
    const std::string id = r.id;
    return checked_embeddings(std::move(r), id, crops.size());
}

std::vector<MaskResult> RemoteBackend::segment(const std::string& image_id, const Raster& image,
                                               std::span<const Box> boxes) {
    return expect<SegmentResult>(call(SegmentRequest{image_id, image, {boxes.begin(), boxes.end()}})).masks;
}

WeightMap RemoteBackend::fusion_weights(const ImagePair& pair) {
    Response r = call(FusionWeightsRequest{pair.id(), pair.rgb(), pair.thermal()});
    const std::string id = r.id;
    auto result = expect<FusionWeightsResult>(std::move(r));
    if (result.width != pair.width() || result.height != pair.height()) {
        throw BackendError(id, "fusion weight map size does not match the image pair", false);
    }
    try {
        return WeightMap(result.width, result.height, std::move(result.weights));
    } catch (const Error& e) {
        throw BackendError(id, e.what(), false);
    }
}

} // namespace openrgbt
