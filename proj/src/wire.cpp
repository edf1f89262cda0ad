#include "fq/wire.hpp"

#include <array>
#include <cstring>

#include "json.hpp"

using nlohmann::json;

namespace fq {

namespace {

struct TypeName {
  MsgType type;
  const char* name;
};

constexpr std::array<TypeName, 19> kTypeNames = {{
    {MsgType::Register, "REGISTER"},
    {MsgType::Heartbeat, "HEARTBEAT"},
    {MsgType::Dispatch, "DISPATCH"},
    {MsgType::ArtifactRequest, "ARTIFACT_REQUEST"},
    {MsgType::ArtifactData, "ARTIFACT_DATA"},
    {MsgType::Result, "RESULT"},
    {MsgType::Cancel, "CANCEL"},
    {MsgType::Ack, "ACK"},
    {MsgType::Submit, "SUBMIT"},
    {MsgType::SubmitOk, "SUBMIT_OK"},
    {MsgType::Reject, "REJECT"},
    {MsgType::Status, "STATUS"},
    {MsgType::StatusOk, "STATUS_OK"},
    {MsgType::ResultFetch, "RESULT_FETCH"},
    {MsgType::ResultDoc, "RESULT_DOC"},
    {MsgType::Debug, "DEBUG"},
    {MsgType::DebugOk, "DEBUG_OK"},
    {MsgType::CancelQuery, "CANCEL_QUERY"},
    {MsgType::ErrorMsg, "ERROR"},
}};

}  // namespace

const char* msg_type_name(MsgType t) {
  for (const auto& tn : kTypeNames)
    if (tn.type == t) return tn.name;
  return "?";
}

MsgType msg_type_from_name(const std::string& name) {
  for (const auto& tn : kTypeNames)
    if (name == tn.name) return tn.type;
  throw Error("UnknownType", "unknown message type: " + name);
}

std::string message_body(const Message& m) {
  json env;
  env["v"] = m.version;
  env["type"] = msg_type_name(m.type);
  if (!m.query_id.empty()) env["qid"] = m.query_id;
  env["payload"] = json::parse(m.payload.empty() ? "{}" : m.payload);
  return env.dump();
}

Message parse_message(const std::string& body) {
  json env = json::parse(body, nullptr, false);
  if (env.is_discarded() || !env.is_object())
    throw Error("BadLength", "frame body is not a JSON object");
  if (!env.contains("v") || !env["v"].is_number_integer())
    throw Error("VersionMismatch", "missing protocol version");
  Message m;
  m.version = env["v"].get<int>();
  if (m.version != 1)
    throw Error("VersionMismatch", "unsupported protocol version " + std::to_string(m.version));
  if (!env.contains("type") || !env["type"].is_string())
    throw Error("UnknownType", "missing message type");
  m.type = msg_type_from_name(env["type"].get<std::string>());
  if (env.contains("qid")) m.query_id = env["qid"].get<std::string>();
  if (env.contains("payload"))
    m.payload = env["payload"].dump();
  else
    m.payload = "{}";
  return m;
}

std::string encode_frame(const Message& m) {
  std::string body = message_body(m);
  if (body.size() > kMaxFrameBody)
    throw Error("BadLength", "frame body exceeds limit");
  std::string out;
  out.reserve(body.size() + 4);
  auto n = static_cast<std::uint32_t>(body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += body;
  return out;
}

void FrameReader::feed(const char* data, std::size_t n) { buf_.append(data, n); }

std::optional<std::string> FrameReader::next() {
  if (buf_.size() < 4) return std::nullopt;
  auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[i])); };
  std::uint32_t len = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (len > kMaxFrameBody) throw Error("BadLength", "declared frame length exceeds limit");
  if (buf_.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
  std::string body = buf_.substr(4, len);
  buf_.erase(0, 4 + static_cast<std::size_t>(len));
  return body;
}

}  // namespace fq
