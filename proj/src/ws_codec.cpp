#include "mmsim/ws_codec.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

namespace mmsim::net {

std::string_view to_string(WsError e)
{
    switch (e) {
    case WsError::None: return "none";
    case WsError::NeedMore: return "need_more";
    case WsError::TextFrame: return "text_frame";
    case WsError::Fragmented: return "fragmented";
    case WsError::BadOpcode: return "bad_opcode";
    case WsError::ReservedBits: return "reserved_bits";
    case WsError::TooLarge: return "too_large";
    case WsError::BadPayload: return "bad_payload";
    }
    return "?";
}

std::vector<std::uint8_t> ws_encode_frame(WsOpcode opcode, std::span<const std::uint8_t> payload,
                                          std::optional<WsMask> mask, bool fin)
{
    std::vector<std::uint8_t> out;
    out.reserve(payload.size() + 14);
    out.push_back(static_cast<std::uint8_t>((fin ? 0x80 : 0x00) | static_cast<std::uint8_t>(opcode)));
    const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
    const std::size_t n = payload.size();
    if (n < 126) {
        out.push_back(static_cast<std::uint8_t>(mask_bit | n));
    } else if (n <= 0xFFFF) {
        out.push_back(mask_bit | 126);
        out.push_back(static_cast<std::uint8_t>(n >> 8));
        out.push_back(static_cast<std::uint8_t>(n));
    } else {
        out.push_back(mask_bit | 127);
        for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(std::uint64_t{n} >> (8 * i)));
    }
    if (mask) {
        out.insert(out.end(), mask->begin(), mask->end());
        for (std::size_t i = 0; i < n; ++i) out.push_back(payload[i] ^ (*mask)[i % 4]);
    } else {
        out.insert(out.end(), payload.begin(), payload.end());
    }
    return out;
}

WsParse ws_parse_frame(std::span<const std::uint8_t> data, std::size_t max_payload)
{
    WsParse res;
    if (data.size() < 2) {
        res.error = WsError::NeedMore;
        return res;
    }
    const std::uint8_t b0 = data[0], b1 = data[1];
    if (b0 & 0x70) {
        res.error = WsError::ReservedBits;
        return res;
    }
    const std::uint8_t op = b0 & 0x0F;
    switch (op) {
    case 0x0: case 0x1: case 0x2: case 0x8: case 0x9: case 0xA: break;
    default:
        res.error = WsError::BadOpcode;
        return res;
    }
    std::size_t pos = 2;
    std::uint64_t len = b1 & 0x7F;
    if (len == 126) {
        if (data.size() < 4) {
            res.error = WsError::NeedMore;
            return res;
        }
        len = (std::uint64_t{data[2]} << 8) | data[3];
        pos = 4;
    } else if (len == 127) {
        if (data.size() < 10) {
            res.error = WsError::NeedMore;
            return res;
        }
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | data[2 + i];
        pos = 10;
    }
    if (len > max_payload) {
        res.error = WsError::TooLarge;
        return res;
    }
    const bool masked = (b1 & 0x80) != 0;
    WsMask mask{};
    if (masked) {
        if (data.size() < pos + 4) {
            res.error = WsError::NeedMore;
            return res;
        }
        for (int i = 0; i < 4; ++i) mask[i] = data[pos + i];
        pos += 4;
    }
    if (data.size() < pos + len) {
        res.error = WsError::NeedMore;
        return res;
    }
    WsFrame f;
    f.fin = (b0 & 0x80) != 0;
    f.opcode = static_cast<WsOpcode>(op);
    f.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                     data.begin() + static_cast<std::ptrdiff_t>(pos + len));
    if (masked)
        for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] ^= mask[i % 4];
    res.frame = std::move(f);
    res.consumed = pos + len;
    return res;
}

std::vector<std::uint8_t> ws_frame(const Message& msg, std::optional<WsMask> mask)
{
    auto bytes = encode(msg);
    return ws_encode_frame(WsOpcode::Binary, bytes, mask);
}

WsUnframed ws_unframe(std::span<const std::uint8_t> bytes)
{
    WsUnframed out;
    auto parsed = ws_parse_frame(bytes);
    if (!parsed.frame) {
        out.error = parsed.error;
        return out;
    }
    const auto& f = *parsed.frame;
    if (f.opcode == WsOpcode::Text) {
        out.error = WsError::TextFrame;
        return out;
    }
    if (!f.fin || f.opcode == WsOpcode::Continuation) {
        out.error = WsError::Fragmented;
        return out;
    }
    if (f.opcode != WsOpcode::Binary) {
        out.error = WsError::BadOpcode;
        return out;
    }
    auto decoded = decode(f.payload);
    if (!decoded.ok()) {
        out.error = WsError::BadPayload;
        out.decode_error = decoded.error;
        return out;
    }
    out.message = std::move(decoded.message);
    out.payload = f.payload;
    return out;
}

std::vector<std::uint8_t> ws_close_frame(std::uint16_t code, std::optional<WsMask> mask)
{
    const std::uint8_t body[2] = {static_cast<std::uint8_t>(code >> 8), static_cast<std::uint8_t>(code)};
    return ws_encode_frame(WsOpcode::Close, body, mask);
}

std::string ws_accept_key(std::string_view client_key)
{
    static constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
    std::string joined(client_key);
    joined += kGuid;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest);
    return base64_encode(std::span<const std::uint8_t>(digest, SHA_DIGEST_LENGTH));
}

std::string base64_encode(std::span<const std::uint8_t> data)
{
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text)
{
    if (text.size() % 4 != 0) return std::nullopt;
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                            static_cast<int>(text.size()));
    if (n < 0) return std::nullopt;
    // EVP_DecodeBlock keeps the zero bytes that padding stands for.
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

}  // namespace mmsim::net
