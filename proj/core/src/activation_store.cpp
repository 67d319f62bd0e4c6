#include "hack/activation_store.hpp"

#include <cstring>
#include <map>

#include "hack/error.hpp"
#include "hack/util.hpp"

namespace hack {
namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out += static_cast<char>(v & 0xFF);
    out += static_cast<char>(v >> 8);
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out += static_cast<char>((v >> (8 * b)) & 0xFF);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw schema_error(std::string("activation store truncated while reading ") + what + " at byte " +
                               std::to_string(pos_));
        }
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint16_t u16(const char* what) {
        const auto s = take(2, what);
        return static_cast<std::uint16_t>(static_cast<unsigned char>(s[0]) | (static_cast<unsigned char>(s[1]) << 8));
    }

    std::uint32_t u32(const char* what) {
        const auto s = take(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[b])) << (8 * b);
        return v;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_activation_store(std::span<const ActivationRecord> records) {
    if (records.size() > 0xFFFFFFFFULL) throw data_error("activation store holds at most 2^32-1 records");
    std::string out(kActivationMagic);
    put_u32(out, static_cast<std::uint32_t>(records.size()));
    std::map<Hook, std::size_t> dims;
    for (const auto& r : records) {
        validate(r);
        if (r.item_id.find('\t') != std::string::npos || r.setting_id.find('\t') != std::string::npos) {
            throw data_error("activation ids may not contain a tab: " + r.item_id);
        }
        const auto [it, inserted] = dims.emplace(r.hook, r.vector.size());
        if (!inserted && it->second != r.vector.size()) {
            throw data_error("activation dimension mismatch at hook " + r.hook.to_string());
        }
        const std::string id = r.item_id + '\t' + r.setting_id;
        if (id.size() > 0xFFFF) throw data_error("activation id longer than 65535 bytes");
        put_u16(out, static_cast<std::uint16_t>(id.size()));
        out += id;
        put_u16(out, r.hook.layer);
        put_u16(out, r.hook.encoded_head());
        put_u32(out, static_cast<std::uint32_t>(r.vector.size()));
        for (float v : r.vector) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
    return out;
}

std::vector<ActivationRecord> decode_activation_store(std::string_view bytes) {
    if (bytes.size() < kActivationMagic.size() || bytes.substr(0, kActivationMagic.size()) != kActivationMagic) {
        throw schema_error("not an activation store: bad magic");
    }
    Reader in(bytes.substr(kActivationMagic.size()));
    const std::uint32_t count = in.u32("record count");
    std::vector<ActivationRecord> out;
    out.reserve(count);
    std::map<Hook, std::size_t> dims;
    for (std::uint32_t i = 0; i < count; ++i) {
        ActivationRecord r;
        const std::uint16_t id_len = in.u16("id length");
        const std::string id(in.take(id_len, "id"));
        if (const auto tab = id.find('\t'); tab != std::string::npos) {
            r.item_id = id.substr(0, tab);
            r.setting_id = id.substr(tab + 1);
        } else {
            r.item_id = id;
            r.setting_id = kBaselineSetting;
        }
        r.hook.layer = in.u16("layer");
        const std::uint16_t head = in.u16("head");
        if (head != kResidualHead) r.hook.head = head;
        const std::uint32_t dim = in.u32("dim");
        r.vector.resize(dim);
        for (std::uint32_t k = 0; k < dim; ++k) {
            const std::uint32_t bits = in.u32("vector");
            std::memcpy(&r.vector[k], &bits, 4);
        }
        const auto [it, inserted] = dims.emplace(r.hook, dim);
        if (!inserted && it->second != dim) {
            throw schema_error("activation dimension mismatch at hook " + r.hook.to_string());
        }
        try {
            validate(r);
        } catch (const Error& e) {
            throw schema_error("record " + std::to_string(i) + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    if (!in.done()) throw schema_error("activation store has trailing bytes after declared record count");
    return out;
}

void write_activation_store(const std::filesystem::path& path, std::span<const ActivationRecord> records) {
    write_file(path, encode_activation_store(records));
}

std::vector<ActivationRecord> read_activation_store(const std::filesystem::path& path) {
    return decode_activation_store(read_file(path));
}

}  // namespace hack
