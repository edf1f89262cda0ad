#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <string>
#include <vector>

#include "doctest.h"
#include "fq/simrng.hpp"
#include "fq/wire.hpp"

using namespace fq;

namespace {

const MsgType kAllTypes[] = {
    MsgType::Register,  MsgType::Heartbeat, MsgType::Dispatch, MsgType::ArtifactRequest,
    MsgType::ArtifactData, MsgType::Result, MsgType::Cancel,   MsgType::Ack,
    MsgType::Submit,    MsgType::SubmitOk,  MsgType::Reject,   MsgType::Status,
    MsgType::StatusOk,  MsgType::ResultFetch, MsgType::ResultDoc, MsgType::Debug,
    MsgType::DebugOk,   MsgType::CancelQuery, MsgType::ErrorMsg};

Message roundtrip(const Message& m) {
  std::string frame = encode_frame(m);
  FrameReader r;
  r.feed(frame.data(), frame.size());
  auto body = r.next();
  REQUIRE(body.has_value());
  return parse_message(*body);
}

}  // namespace

TEST_CASE("type names are stable and bijective") {
  CHECK(std::string(msg_type_name(MsgType::Register)) == "REGISTER");
  CHECK(std::string(msg_type_name(MsgType::ArtifactRequest)) == "ARTIFACT_REQUEST");
  CHECK(std::string(msg_type_name(MsgType::SubmitOk)) == "SUBMIT_OK");
  CHECK(std::string(msg_type_name(MsgType::ErrorMsg)) == "ERROR");
  for (MsgType t : kAllTypes) CHECK(msg_type_from_name(msg_type_name(t)) == t);
  CHECK_THROWS_AS(msg_type_from_name("NOPE"), Error);
}

TEST_CASE("golden frame: empty-payload ACK encodes to frozen bytes") {
  Message m;
  m.type = MsgType::Ack;
  std::string frame = encode_frame(m);
  const std::string body = "{\"payload\":{},\"type\":\"ACK\",\"v\":1}";
  REQUIRE(body.size() == 33);
  std::string want = std::string("\x00\x00\x00\x21", 4) + body;
  CHECK(frame == want);
}

TEST_CASE("golden frame: dispatch envelope with qid, keys canonically sorted") {
  Message m;
  m.type = MsgType::Dispatch;
  m.query_id = "q00000007";
  m.payload = "{\"task\":\"q00000007/d00001\",\"artifact\":\"abc\"}";
  std::string frame = encode_frame(m);
  // payload keys re-sorted (artifact before task); envelope keys sorted too
  const std::string body =
      "{\"payload\":{\"artifact\":\"abc\",\"task\":\"q00000007/d00001\"},"
      "\"qid\":\"q00000007\",\"type\":\"DISPATCH\",\"v\":1}";
  REQUIRE(frame.size() == body.size() + 4);
  CHECK(frame.substr(4) == body);
  // big-endian length header
  auto b = [&](int i) { return static_cast<unsigned char>(frame[i]); };
  std::size_t n = (static_cast<std::size_t>(b(0)) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  CHECK(n == body.size());
}

TEST_CASE("every message type round-trips exactly") {
  int i = 0;
  for (MsgType t : kAllTypes) {
    Message m;
    m.type = t;
    m.query_id = (i % 2 == 0) ? "" : ("q" + std::to_string(i));
    m.payload = "{\"k\":" + std::to_string(i) + "}";
    Message back = roundtrip(m);
    REQUIRE(back == m);
    i++;
  }
}

TEST_CASE("encoding is deterministic and payload-normalizing") {
  Message m;
  m.type = MsgType::Result;
  m.query_id = "q1";
  m.payload = "{\"b\":1,\"a\":2}";
  std::string b1 = message_body(m);
  std::string b2 = message_body(m);
  CHECK(b1 == b2);
  CHECK(b1.find("{\"a\":2,\"b\":1}") != std::string::npos);
  // a normalized message re-encodes to identical bytes
  Message norm = parse_message(b1);
  CHECK(message_body(norm) == b1);
}

TEST_CASE("frame reader reassembles messages from arbitrary chunking") {
  std::vector<Message> msgs;
  for (int i = 0; i < 20; i++) {
    Message m;
    m.type = kAllTypes[static_cast<std::size_t>(i) % 19];
    m.query_id = "q" + std::to_string(i);
    m.payload = "{\"seq\":" + std::to_string(i) + ",\"pad\":\"" + std::string(i * 7, 'x') +
                "\"}";
    msgs.push_back(m);
  }
  std::string stream;
  for (const auto& m : msgs) stream += encode_frame(m);

  Rng rng(1234);
  for (int trial = 0; trial < 30; trial++) {
    FrameReader r;
    std::vector<Message> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      std::size_t n = 1 + rng.below(97);
      if (pos + n > stream.size()) n = stream.size() - pos;
      r.feed(stream.data() + pos, n);
      pos += n;
      while (auto body = r.next()) got.push_back(parse_message(*body));
    }
    REQUIRE(got.size() == msgs.size());
    for (std::size_t i = 0; i < msgs.size(); i++) REQUIRE(got[i] == msgs[i]);
  }
}

TEST_CASE("reader yields nothing on a bare or partial header") {
  FrameReader r;
  CHECK(!r.next().has_value());
  const char tiny[] = {0, 0};
  r.feed(tiny, 2);
  CHECK(!r.next().has_value());
  const char rest[] = {0, 5, 'h'};
  r.feed(rest, 3);
  CHECK(!r.next().has_value());  // header complete (len 5) but only 1 body byte
  r.feed("ello!", 5);            // 5th byte belongs to the next frame's header
  auto body = r.next();
  REQUIRE(body.has_value());
  CHECK(*body == "hello");
}

TEST_CASE("declared length beyond the cap raises BadLength") {
  FrameReader r;
  // 0x04000001 = 64MiB + 1
  const unsigned char hdr[] = {0x04, 0x00, 0x00, 0x01};
  r.feed(reinterpret_cast<const char*>(hdr), 4);
  try {
    r.next();
    FAIL("no error raised");
  } catch (const Error& e) {
    CHECK(e.code == "BadLength");
  }
}

TEST_CASE("oversized body is refused at encode time") {
  Message m;
  m.type = MsgType::ArtifactData;
  m.payload = "{\"bytes\":\"" + std::string(kMaxFrameBody, 'a') + "\"}";
  try {
    encode_frame(m);
    FAIL("no error raised");
  } catch (const Error& e) {
    CHECK(e.code == "BadLength");
  }
}

TEST_CASE("parse rejects bad envelopes with coded errors") {
  auto code_of = [](const std::string& body) {
    try {
      parse_message(body);
      return std::string("no-throw");
    } catch (const Error& e) {
      return e.code;
    }
  };
  CHECK(code_of("not json") == "BadLength");
  CHECK(code_of("[1,2]") == "BadLength");
  CHECK(code_of("{\"type\":\"ACK\"}") == "VersionMismatch");
  CHECK(code_of("{\"type\":\"ACK\",\"v\":2}") == "VersionMismatch");
  CHECK(code_of("{\"v\":1}") == "UnknownType");
  CHECK(code_of("{\"type\":\"NOPE\",\"v\":1}") == "UnknownType");
  // missing payload defaults to {}
  Message m = parse_message("{\"type\":\"ACK\",\"v\":1}");
  CHECK(m.payload == "{}");
  CHECK(m.query_id.empty());
}

TEST_CASE("1000 random messages survive encode/decode byte-exactly") {
  Rng rng(888);
  for (int i = 0; i < 1000; i++) {
    Message m;
    m.type = kAllTypes[rng.below(19)];
    if (rng.below(2) == 0) m.query_id = "q" + std::to_string(rng.below(100000));
    // canonical payload: build sorted keys directly
    std::string pad(rng.below(200), 'p');
    m.payload = "{\"a\":" + std::to_string(rng.uniform_int(-5000, 5000)) + ",\"b\":\"" + pad +
                "\",\"c\":" + (rng.below(2) ? "true" : "false") + "}";
    Message back = roundtrip(m);
    REQUIRE(back == m);
    // double round-trip is the identity on the wire form too
    REQUIRE(encode_frame(back) == encode_frame(m));
  }
}
