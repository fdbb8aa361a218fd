#include "polymerlab/checkpoint.hpp"

#include "polymerlab/errors.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace polymer {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'C', 'K', 'P', 'T', '\r', '\n'};

class Writer {
public:
    template <class T>
    void put(T v)
    {
        static_assert(std::is_arithmetic_v<T>);
        if constexpr (std::is_floating_point_v<T>) {
            put(std::bit_cast<std::uint64_t>(static_cast<double>(v)));
        } else {
            auto u = static_cast<std::make_unsigned_t<T>>(v);
            for (std::size_t i = 0; i < sizeof(T); ++i) {
                out_.push_back(static_cast<char>(u & 0xff));
                u = static_cast<decltype(u)>(static_cast<std::uint64_t>(u) >> 8);
            }
        }
    }
    void put(const std::string& s)
    {
        put(static_cast<std::uint64_t>(s.size()));
        out_ += s;
    }
    template <class T>
    void put(const std::vector<T>& v)
    {
        put(static_cast<std::uint64_t>(v.size()));
        for (const auto& x : v) put(x);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    template <class T>
    T get()
    {
        if constexpr (std::is_floating_point_v<T>) {
            return std::bit_cast<double>(get<std::uint64_t>());
        } else {
            need(sizeof(T));
            std::make_unsigned_t<T> u = 0;
            for (std::size_t i = 0; i < sizeof(T); ++i) {
                u = static_cast<decltype(u)>(u | static_cast<decltype(u)>(static_cast<unsigned char>(in_[pos_ + i]))
                                                     << (8 * i));
            }
            pos_ += sizeof(T);
            return static_cast<T>(u);
        }
    }
    std::string get_string()
    {
        const auto n = length();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    template <class T>
    std::vector<T> get_vector()
    {
        const auto n = length();
        std::vector<T> v;
        v.reserve(n);
        for (std::size_t i = 0; i < n; ++i) v.push_back(get<T>());
        return v;
    }
    std::size_t length()
    {
        const auto n = get<std::uint64_t>();
        if (n > in_.size() - pos_) throw CheckpointError("checkpoint is corrupt: length field out of range");
        return static_cast<std::size_t>(n);
    }
    bool done() const noexcept { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

void put_record(Writer& w, const ReplicaRecord& r)
{
    w.put(r.id);
    w.put(r.log_sup_w);
    w.put(r.log_sup_point);
    w.put(r.log_w_final);
    w.put(r.log_w_grid);
    w.put(r.log_sup_grid);
    w.put(static_cast<std::uint64_t>(r.overshoot.size()));
    for (const auto& h : r.overshoot) {
        w.put(static_cast<std::uint8_t>(h.hit));
        w.put(static_cast<std::int32_t>(h.time));
        w.put(h.log_w);
        w.put(h.max_mu);
        w.put(h.log_max_point);
        w.put(static_cast<std::uint32_t>(h.argmax.size()));
        for (Eigen::Index i = 0; i < h.argmax.size(); ++i) w.put(static_cast<std::int32_t>(h.argmax[i]));
    }
    w.put(r.samples);
}

ReplicaRecord get_record(Reader& r)
{
    ReplicaRecord rec;
    rec.id = r.get<std::uint64_t>();
    rec.log_sup_w = r.get<double>();
    rec.log_sup_point = r.get<double>();
    rec.log_w_final = r.get<double>();
    rec.log_w_grid = r.get_vector<double>();
    rec.log_sup_grid = r.get_vector<double>();
    const auto levels = r.length();
    for (std::size_t l = 0; l < levels; ++l) {
        OvershootHit h;
        h.hit = r.get<std::uint8_t>() != 0;
        h.time = r.get<std::int32_t>();
        h.log_w = r.get<double>();
        h.max_mu = r.get<double>();
        h.log_max_point = r.get<double>();
        const auto dim = r.get<std::uint32_t>();
        if (dim > static_cast<std::uint32_t>(kMaxDim)) throw CheckpointError("checkpoint is corrupt: bad site dimension");
        h.argmax.resize(static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < h.argmax.size(); ++i) h.argmax[i] = r.get<std::int32_t>();
        rec.overshoot.push_back(h);
    }
    rec.samples = r.get_vector<double>();
    return rec;
}

std::string hex(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) noexcept
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string encode_checkpoint(const Checkpoint& c, std::uint32_t version)
{
    Writer body;
    body.put(c.tag);
    body.put(static_cast<std::uint64_t>(c.sections.size()));
    for (const auto& s : c.sections) {
        body.put(s.master_seed);
        body.put(static_cast<std::int32_t>(s.horizon));
        body.put(s.levels);
        body.put(static_cast<std::uint64_t>(s.grid_times.size()));
        for (int t : s.grid_times) body.put(static_cast<std::int32_t>(t));
        body.put(static_cast<std::uint64_t>(s.records.size()));
        for (const auto& r : s.records) put_record(body, r);
    }
    const std::string payload = body.take();

    Writer head;
    head.put(version);
    head.put(static_cast<std::uint64_t>(payload.size()));
    std::string out(kMagic, sizeof kMagic);
    out += head.take();
    out += payload;
    Writer tail;
    tail.put(fnv1a(payload));
    out += tail.take();
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes)
{
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError("not a polymerlab checkpoint (bad magic)");
    }
    Reader head(bytes.substr(sizeof kMagic));
    const auto version = head.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint format version " + std::to_string(version) + " does not match version " +
                              std::to_string(kCheckpointVersion) + " read by this build");
    }
    const auto size = head.get<std::uint64_t>();
    const std::size_t start = sizeof kMagic + 12;
    if (bytes.size() < start || bytes.size() - start != size + 8) throw CheckpointError("checkpoint is truncated");
    const std::string_view payload = bytes.substr(start, static_cast<std::size_t>(size));
    Reader tail(bytes.substr(start + payload.size()));
    const auto stored = tail.get<std::uint64_t>();
    const auto computed = fnv1a(payload);
    if (stored != computed) {
        throw CheckpointError("checkpoint checksum mismatch: stored " + hex(stored) + ", computed " + hex(computed));
    }

    Reader r(payload);
    Checkpoint c;
    c.tag = r.get_string();
    const auto sections = r.length();
    for (std::size_t i = 0; i < sections; ++i) {
        ReplicaSummary s;
        s.master_seed = r.get<std::uint64_t>();
        s.horizon = r.get<std::int32_t>();
        s.levels = r.get_vector<double>();
        const auto grid = r.length();
        for (std::size_t g = 0; g < grid; ++g) s.grid_times.push_back(r.get<std::int32_t>());
        const auto n = r.length();
        s.records.reserve(n);
        for (std::size_t k = 0; k < n; ++k) s.records.push_back(get_record(r));
        c.sections.push_back(std::move(s));
    }
    if (!r.done()) throw CheckpointError("checkpoint is corrupt: trailing bytes");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path)
{
    const std::string bytes = encode_checkpoint(c);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write checkpoint " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ConfigError("cannot write checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return decode_checkpoint(ss.str());
    } catch (const CheckpointError& e) {
        throw CheckpointError(path + ": " + e.what());
    }
}

} // namespace polymer
