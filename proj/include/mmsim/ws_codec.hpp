#pragma once

// WebSocket (RFC 6455) framing for browser clients. Each protocol datagram is
// carried unchanged as the payload of one binary frame.

#include "mmsim/net_protocol.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmsim::net {

enum class WsOpcode : std::uint8_t {
    Continuation = 0x0,
    Text = 0x1,
    Binary = 0x2,
    Close = 0x8,
    Ping = 0x9,
    Pong = 0xA,
};

inline constexpr std::uint16_t kWsCloseNormal = 1000;
inline constexpr std::uint16_t kWsCloseProtocolError = 1002;
inline constexpr std::uint16_t kWsCloseTooBig = 1009;

using WsMask = std::array<std::uint8_t, 4>;

struct WsFrame {
    bool fin = true;
    WsOpcode opcode = WsOpcode::Binary;
    std::vector<std::uint8_t> payload;  // unmasked
};

enum class WsError : std::uint8_t {
    None,
    NeedMore,      // incomplete frame, read more bytes
    TextFrame,     // text data frames are not part of the protocol
    Fragmented,    // FIN = 0 or continuation frame
    BadOpcode,
    ReservedBits,
    TooLarge,
    BadPayload,    // binary frame whose payload fails decode()
};

std::string_view to_string(WsError e);

/// Serializes one frame. Client-to-server frames must pass a mask.
std::vector<std::uint8_t> ws_encode_frame(WsOpcode opcode, std::span<const std::uint8_t> payload,
                                          std::optional<WsMask> mask = std::nullopt, bool fin = true);

struct WsParse {
    std::optional<WsFrame> frame;
    WsError error = WsError::None;
    std::size_t consumed = 0;  // bytes of input used by `frame`
};

/// Parses the first frame in `data`. Returns NeedMore when incomplete.
/// Frames longer than `max_payload` are rejected.
WsParse ws_parse_frame(std::span<const std::uint8_t> data, std::size_t max_payload = kMaxDatagram);

std::vector<std::uint8_t> ws_frame(const Message& msg, std::optional<WsMask> mask = std::nullopt);

struct WsUnframed {
    std::optional<Message> message;
    WsError error = WsError::None;
    std::optional<DecodeError> decode_error;
    std::vector<std::uint8_t> payload;  // the raw datagram bytes on success
};

/// Inverse of ws_frame for exactly one complete frame.
WsUnframed ws_unframe(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> ws_close_frame(std::uint16_t code, std::optional<WsMask> mask = std::nullopt);

/// Sec-WebSocket-Accept value for a client key.
std::string ws_accept_key(std::string_view client_key);

std::string base64_encode(std::span<const std::uint8_t> data);
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);

}  // namespace mmsim::net
