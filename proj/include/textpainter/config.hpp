#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace textpainter {

// Flat dotted-key configuration, e.g. `loss.r = 0.85`. Files are one
// `key = value` pair per line; `#` starts a comment.
class KVConfig {
public:
    KVConfig() = default;

    static KVConfig from_file(const std::string& path);
    static KVConfig from_string(const std::string& text);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get_str(const std::string& key, const std::string& def) const;
    int64_t get_int(const std::string& key, int64_t def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;

    // Canonical text form: sorted keys, one per line. Stable input for hashing.
    std::string canonical() const;
    uint64_t hash() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace textpainter
