#pragma once

// Websocket message encoding for interactive sessions.
//
// Text frames carry JSON. Coordinate arrays are flat row-major lists. When a
// mesh has more vertices than the binary threshold, the "vertices" or
// "positions" field is replaced by "binary": true and the array follows in
// the next frame as a binary message: a little-endian uint64 count of values,
// then that many little-endian IEEE-754 doubles.

#include "flipfree/session.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flipfree {

/// One logical message: a JSON text frame, optionally followed by a binary one.
struct OutgoingMessage {
  std::string text;
  std::optional<std::string> binary;
  bool is_update = false;
};

std::string encode_doubles_binary(const Eigen::MatrixXd& rows);
/// Inverse of encode_doubles_binary; throws InvalidInput on a malformed frame.
std::vector<double> decode_doubles_binary(std::string_view frame);

OutgoingMessage encode_mesh(const Mesh& mesh, std::size_t binary_threshold);
OutgoingMessage encode_event(const SessionEvent& event, std::size_t binary_threshold);
OutgoingMessage encode_error(const std::string& message);

/// Parses one client text frame and forwards it to the session. Returns an
/// error message for malformed or rejected requests; acks come from the session.
std::optional<std::string> dispatch_client_message(DeformSession& session, std::string_view text);

}  // namespace flipfree
