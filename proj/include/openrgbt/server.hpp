#pragma once

#include <iosfwd>
#include <string>

#include "openrgbt/backend.hpp"
#include "openrgbt/protocol.hpp"

namespace openrgbt {

/// Dispatches one request to `backend`. Exceptions become in-band error
/// responses carrying the request id.
protocol::Response handle_request(ModelBackend& backend, const protocol::Request& request);

/// Decode, dispatch, encode. Undecodable lines still get an error response,
/// echoing the id when one can be recovered.
std::string handle_line(ModelBackend& backend, const std::string& line);

/// JSON-lines loop until end of input.
void serve_stream(ModelBackend& backend, std::istream& in, std::ostream& out);

/// Blocking HTTP server answering POST requests on any path.
void serve_http(ModelBackend& backend, const std::string& host, int port);

} // namespace openrgbt
