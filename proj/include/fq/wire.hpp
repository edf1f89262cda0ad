#pragma once
// Framed message protocol shared by device and client connections.
//
// Frame = 4-byte big-endian body length + body.  Body = canonical JSON
// (UTF-8, keys sorted) of the envelope:
//   {"payload": {...}, "qid": "<query id, present when relevant>",
//    "type": "<TYPE NAME>", "v": 1}
// Canonical encoding keeps encode deterministic so frames can be hashed,
// golden-filed, and compared byte-for-byte.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fq/common.hpp"

namespace fq {

enum class MsgType {
  // device <-> coordinator
  Register,
  Heartbeat,
  Dispatch,
  ArtifactRequest,
  ArtifactData,
  Result,
  Cancel,
  Ack,
  // client <-> coordinator
  Submit,
  SubmitOk,
  Reject,
  Status,
  StatusOk,
  ResultFetch,
  ResultDoc,
  Debug,
  DebugOk,
  CancelQuery,
  ErrorMsg,
};

const char* msg_type_name(MsgType t);
MsgType msg_type_from_name(const std::string& name);  // throws UnknownType

struct Message {
  int version = 1;
  MsgType type = MsgType::Ack;
  std::string query_id;  // empty = absent from the envelope
  std::string payload;   // canonical JSON object text ("{}" when empty)

  bool operator==(const Message& o) const {
    return version == o.version && type == o.type && query_id == o.query_id &&
           payload == o.payload;
  }
};

inline constexpr std::size_t kMaxFrameBody = 64u * 1024u * 1024u;

// Envelope body text (canonical JSON, no frame header).
std::string message_body(const Message& m);
// Parse an envelope body. Throws VersionMismatch/UnknownType/BadLength.
Message parse_message(const std::string& body);

// Full frame: header + body. Throws BadLength if body exceeds kMaxFrameBody.
std::string encode_frame(const Message& m);

// Incremental frame splitter for stream transports.
class FrameReader {
public:
  // Append raw bytes from the stream.
  void feed(const char* data, std::size_t n);
  // Pop the next complete body, if one is buffered.
  // Throws BadLength when a declared length exceeds kMaxFrameBody.
  std::optional<std::string> next();

private:
  std::string buf_;
};

}  // namespace fq
