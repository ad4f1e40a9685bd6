#include "flipfree/protocol.hpp"

#include "flipfree/energies.hpp"
#include "flipfree/handles_json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

namespace flipfree {
namespace {

static_assert(std::endian::native == std::endian::little, "binary frames assume a little-endian host");

nlohmann::json flat(const Eigen::MatrixXd& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    for (Eigen::Index c = 0; c < rows.cols(); ++c) out.push_back(rows(r, c));
  return out;
}

void put_array(nlohmann::json& msg, OutgoingMessage& out, const char* key, const Eigen::MatrixXd& rows,
               std::size_t binary_threshold) {
  if (static_cast<std::size_t>(rows.rows()) > binary_threshold) {
    msg["binary"] = true;
    out.binary = encode_doubles_binary(rows);
  } else {
    msg[key] = flat(rows);
  }
}

}  // namespace

std::string encode_doubles_binary(const Eigen::MatrixXd& rows) {
  const std::uint64_t count = static_cast<std::uint64_t>(rows.size());
  std::string out(sizeof count + count * sizeof(double), '\0');
  std::memcpy(out.data(), &count, sizeof count);
  char* dst = out.data() + sizeof count;
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      const double v = rows(r, c);
      std::memcpy(dst, &v, sizeof v);
      dst += sizeof v;
    }
  return out;
}

std::vector<double> decode_doubles_binary(std::string_view frame) {
  std::uint64_t count = 0;
  if (frame.size() < sizeof count) throw InvalidInput("binary frame shorter than its header");
  std::memcpy(&count, frame.data(), sizeof count);
  if (frame.size() != sizeof count + count * sizeof(double)) {
    throw InvalidInput("binary frame length does not match its count");
  }
  std::vector<double> out(count);
  std::memcpy(out.data(), frame.data() + sizeof count, count * sizeof(double));
  return out;
}

OutgoingMessage encode_mesh(const Mesh& mesh, std::size_t binary_threshold) {
  OutgoingMessage out;
  nlohmann::json msg = {{"type", "mesh"}, {"num_vertices", mesh.num_vertices()}, {"num_faces", mesh.num_elements()}};
  put_array(msg, out, "vertices", mesh.vertices, binary_threshold);
  nlohmann::json faces = nlohmann::json::array();
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int k = 0; k < mesh.elements.cols(); ++k) faces.push_back(mesh.elements(e, k));
  msg["faces"] = std::move(faces);
  out.text = msg.dump();
  return out;
}

OutgoingMessage encode_event(const SessionEvent& event, std::size_t binary_threshold) {
  OutgoingMessage out;
  nlohmann::json msg;
  if (const auto* u = std::get_if<SessionUpdate>(&event)) {
    msg = {{"type", "update"}, {"iter", u->iter},     {"energy", u->energy}, {"flips", u->flips},
           {"e_prim", u->e_prim}, {"e_dual", u->e_dual}, {"final", u->final}};
    put_array(msg, out, "positions", u->positions, binary_threshold);
    out.is_update = true;
  } else if (const auto* s = std::get_if<SessionStatus>(&event)) {
    msg = {{"type", "status"}, {"state", session_state_name(s->state)}};
    if (!s->request.empty()) msg["request"] = s->request;
    if (!s->ack.empty()) msg["ack"] = s->ack;
  } else {
    return encode_error(std::get<SessionError>(event).message);
  }
  out.text = msg.dump();
  return out;
}

OutgoingMessage encode_error(const std::string& message) {
  OutgoingMessage out;
  out.text = nlohmann::json{{"type", "error"}, {"message", message}}.dump();
  return out;
}

std::optional<std::string> dispatch_client_message(DeformSession& session, std::string_view text) {
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return std::string("malformed JSON: ") + e.what();
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return std::string("message must be an object with a string \"type\"");
  }
  const std::string type = msg["type"].get<std::string>();
  try {
    if (type == "set_constraints") {
      if (!msg.contains("handles")) return std::string("set_constraints requires \"handles\"");
      session.set_constraints(handles_from_json(msg["handles"], session.mesh().num_vertices(), 2));
    } else if (type == "pause") {
      session.pause();
    } else if (type == "resume") {
      session.resume();
    } else if (type == "reset") {
      session.reset();
    } else if (type == "set_energy") {
      if (!msg.contains("kind") || !msg["kind"].is_string()) return std::string("set_energy requires a string \"kind\"");
      session.set_energy(parse_energy(msg["kind"].get<std::string>()));
    } else {
      return "unknown message type \"" + type + "\"";
    }
  } catch (const InvalidInput& e) {
    return type + ": " + e.what();
  }
  return std::nullopt;
}

}  // namespace flipfree
