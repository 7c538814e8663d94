#include "openrgbt/server.hpp"

#include <iostream>
#include <mutex>
#include <type_traits>

#include "httplib.h"
#include "openrgbt/error.hpp"

namespace openrgbt {

using namespace protocol;

namespace {

std::vector<VisualPrompt> to_prompts(const std::vector<PromptSpec>& specs) {
    std::vector<VisualPrompt> out;
    for (const auto& s : specs) {
        out.push_back(VisualPrompt{s.class_name, s.box, s.image ? std::make_shared<const Raster>(*s.image) : nullptr});
    }
    return out;
}

bool has_capability(ModelBackend& backend, const std::string& op) {
    return op == "hello" || backend.supports(op);
}

} // namespace

Response handle_request(ModelBackend& backend, const Request& request) {
    Response response{request.id, op_name(request.body), ErrorResult{}};
    try {
        if (!has_capability(backend, response.op)) {
            throw InvalidInput("capability '" + response.op + "' not offered by this backend");
        }
        response.body = std::visit(
            [&](const auto& r) -> ResponseBody {
                using T = std::decay_t<decltype(r)>;
                if constexpr (std::is_same_v<T, HelloRequest>) {
                    return HelloResult{backend.embedding_dim(), backend.capabilities()};
                } else if constexpr (std::is_same_v<T, DetectTextRequest>) {
                    return DetectResult{backend.detect_text(r.image_id, r.image, r.classes)};
                } else if constexpr (std::is_same_v<T, DetectVisualRequest>) {
                    const auto prompts = to_prompts(r.prompts);
                    return DetectResult{backend.detect_visual(r.image_id, r.image, prompts)};
                } else if constexpr (std::is_same_v<T, EmbedTextsRequest>) {
                    return EmbedResult{backend.embed_texts(r.texts)};
                } else if constexpr (std::is_same_v<T, EmbedCropsRequest>) {
                    std::vector<CropInput> crops;
                    for (const auto& c : r.crops) {
                        crops.push_back(CropInput{c.box, c.image});
                    }
                    return EmbedResult{backend.embed_crops(r.image_id, crops)};
                } else if constexpr (std::is_same_v<T, SegmentRequest>) {
                    return SegmentResult{backend.segment(r.image_id, r.image, r.boxes)};
                } else {
                    const WeightMap w = backend.fusion_weights(ImagePair(r.rgb, r.thermal, r.image_id));
                    return FusionWeightsResult{w.width(), w.height(), {w.weights().begin(), w.weights().end()}};
                }
            },
            request.body);
    } catch (const std::exception& e) {
        response.body = ErrorResult{e.what()};
    }
    return response;
}

std::string handle_line(ModelBackend& backend, const std::string& line) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        return encode(Response{"", "", ErrorResult{std::string("malformed JSON: ") + e.what()}});
    }
    std::string id;
    std::string op;
    if (doc.is_object()) {
        if (doc.contains("id")) {
            id = doc["id"].is_string() ? doc["id"].get<std::string>() : doc["id"].dump();
        }
        if (doc.contains("op") && doc["op"].is_string()) {
            op = doc["op"].get<std::string>();
        }
    }
    Request request;
    try {
        request = request_from_json(doc);
    } catch (const std::exception& e) {
        return encode(Response{id, op, ErrorResult{e.what()}});
    }
    return encode(handle_request(backend, request));
}

void serve_stream(ModelBackend& backend, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        out << handle_line(backend, line) << '\n';
        out.flush();
    }
}

void serve_http(ModelBackend& backend, const std::string& host, int port) {
    httplib::Server server;
    std::mutex mutex;
    server.Post(R"(/.*)", [&](const httplib::Request& req, httplib::Response& res) {
        std::string reply;
        {
            std::lock_guard lock(mutex);
            reply = handle_line(backend, req.body);
        }
        res.set_content(reply, "application/json");
    });
    if (!server.listen(host, port)) {
        throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    }
}

} // namespace openrgbt
