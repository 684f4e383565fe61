#include "evgame/payoff_tensor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include "evgame/digest.hpp"
#include "evgame/errors.hpp"

namespace evgame {

namespace {

constexpr char kMagic[8] = {'E', 'V', 'P', 'T', 'C', 'A', 'C', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t remaining() const { return size_ - pos_; }

    std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void raw(void* dst, std::size_t n) {
        if (remaining() < n) throw IoError("tensor cache: truncated file");
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }

private:
    unsigned int byte() {
        if (pos_ >= size_) throw IoError("tensor cache: truncated file");
        return data_[pos_++];
    }
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::size_t record_size(int n) { return 10 * static_cast<std::size_t>(n) + 20; }

std::string header_bytes(const PayoffTensor& tensor) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kFormatVersion);
    out.append(tensor.scenario_digest());
    put_u32(out, static_cast<std::uint32_t>(tensor.dims().size()));
    for (int m : tensor.dims()) put_u32(out, static_cast<std::uint32_t>(m));
    put_u64(out, tensor.size());
    return out;
}

std::string record_bytes(const PayoffTensor& tensor, std::uint64_t rank) {
    const TensorEntry& e = tensor.entry(rank);
    StartProfile profile = tensor.profile_at(rank);
    std::string out;
    for (int s : profile.starts) put_u16(out, static_cast<std::uint16_t>(s));
    for (double p : e.payoffs) put_f64(out, p);
    put_u32(out, e.iterations);
    put_f64(out, e.residual);
    put_f64(out, e.br_gap);
    return out;
}

struct LoadedCache {
    PayoffTensor tensor;
    bool had_partial_tail = false;
};

LoadedCache read_cache(const std::filesystem::path& path, const Scenario& scenario, bool tolerant) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor cache: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(bytes.data(), bytes.size());

    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("tensor cache: bad magic");
    if (r.u32() != kFormatVersion) throw IoError("tensor cache: unsupported format version");
    char digest[64];
    r.raw(digest, sizeof(digest));
    std::string file_digest(digest, sizeof(digest));
    if (file_digest != scenario.digest()) {
        throw IoError("tensor cache: scenario digest mismatch (cache was built for a different scenario)");
    }

    LoadedCache loaded;
    loaded.tensor = PayoffTensor::empty_for(scenario);
    const int n = loaded.tensor.num_aggregators();
    std::uint32_t file_n = r.u32();
    if (static_cast<int>(file_n) != n) throw IoError("tensor cache: aggregator count mismatch");
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(r.u32()) != loaded.tensor.dims()[i]) {
            throw IoError("tensor cache: start-set dimensions mismatch");
        }
    }
    if (r.u64() != loaded.tensor.size()) throw IoError("tensor cache: profile count mismatch");

    const std::size_t rec = record_size(n);
    while (r.remaining() >= rec) {
        StartProfile profile;
        profile.starts.resize(n);
        for (int i = 0; i < n; ++i) {
            int s = r.u16();
            if (s < 1 || s > loaded.tensor.dims()[i]) {
                throw IoError("tensor cache: record start slot out of range (corrupt file)");
            }
            profile.starts[i] = s;
        }
        TensorEntry e;
        e.payoffs.resize(n);
        for (int i = 0; i < n; ++i) e.payoffs[i] = r.f64();
        e.iterations = r.u32();
        e.residual = r.f64();
        e.br_gap = r.f64();
        e.present = true;
        loaded.tensor.set_entry(loaded.tensor.rank_of(profile), std::move(e));
    }
    if (r.remaining() != 0) {
        if (!tolerant) throw IoError("tensor cache: trailing partial record (corrupt file)");
        loaded.had_partial_tail = true;
    }
    return loaded;
}

}  // namespace

PayoffTensor PayoffTensor::empty_for(const Scenario& scenario) {
    PayoffTensor t;
    t.scenario_digest_ = scenario.digest();
    t.total_ = 1;
    for (const auto& agg : scenario.aggregators) {
        int m = agg.latest_start(scenario.horizon_slots);
        t.dims_.push_back(m);
        if (t.total_ > (1ull << 40) / static_cast<std::uint64_t>(m)) {
            throw ConfigError("payoff tensor: start-profile space too large to materialize");
        }
        t.total_ *= static_cast<std::uint64_t>(m);
    }
    t.entries_.resize(t.total_);
    return t;
}

std::uint64_t PayoffTensor::rank_of(const StartProfile& profile) const {
    if (profile.starts.size() != dims_.size()) {
        throw std::invalid_argument("rank_of: start profile has wrong arity");
    }
    std::uint64_t rank = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        int digit = profile.starts[i] - 1;
        if (digit < 0 || digit >= dims_[i]) {
            throw std::invalid_argument("rank_of: start slot outside the admissible set");
        }
        rank = rank * static_cast<std::uint64_t>(dims_[i]) + static_cast<std::uint64_t>(digit);
    }
    return rank;
}

StartProfile PayoffTensor::profile_at(std::uint64_t rank) const {
    StartProfile profile;
    profile.starts.resize(dims_.size());
    for (std::size_t i = dims_.size(); i-- > 0;) {
        profile.starts[i] = static_cast<int>(rank % static_cast<std::uint64_t>(dims_[i])) + 1;
        rank /= static_cast<std::uint64_t>(dims_[i]);
    }
    return profile;
}

void PayoffTensor::set_entry(std::uint64_t rank, TensorEntry entry) {
    entries_[rank] = std::move(entry);
}

bool PayoffTensor::complete() const { return completed_count() == total_; }

std::uint64_t PayoffTensor::completed_count() const {
    std::uint64_t n = 0;
    for (const auto& e : entries_) n += e.present ? 1 : 0;
    return n;
}

double PayoffTensor::median_abs_payoff() const {
    std::vector<double> mags;
    mags.reserve(entries_.size() * dims_.size());
    for (const auto& e : entries_) {
        if (!e.present) continue;
        for (double p : e.payoffs) mags.push_back(std::abs(p));
    }
    if (mags.empty()) throw std::logic_error("median_abs_payoff: tensor has no entries");
    std::size_t mid = mags.size() / 2;
    std::nth_element(mags.begin(), mags.begin() + mid, mags.end());
    return mags[mid];
}

std::string PayoffTensor::content_digest() const {
    std::string bytes = header_bytes(*this);
    for (std::uint64_t k = 0; k < total_; ++k) {
        if (entries_[k].present) bytes += record_bytes(*this, k);
    }
    return sha256_hex(bytes.data(), bytes.size());
}

bool bit_identical(const PayoffTensor& a, const PayoffTensor& b) {
    if (a.scenario_digest_ != b.scenario_digest_ || a.dims_ != b.dims_ || a.total_ != b.total_) return false;
    for (std::uint64_t k = 0; k < a.total_; ++k) {
        const TensorEntry& ea = a.entries_[k];
        const TensorEntry& eb = b.entries_[k];
        if (ea.present != eb.present) return false;
        if (!ea.present) continue;
        if (ea.iterations != eb.iterations) return false;
        if (std::bit_cast<std::uint64_t>(ea.residual) != std::bit_cast<std::uint64_t>(eb.residual)) return false;
        if (std::bit_cast<std::uint64_t>(ea.br_gap) != std::bit_cast<std::uint64_t>(eb.br_gap)) return false;
        if (ea.payoffs.size() != eb.payoffs.size()) return false;
        for (std::size_t i = 0; i < ea.payoffs.size(); ++i) {
            if (std::bit_cast<std::uint64_t>(ea.payoffs[i]) != std::bit_cast<std::uint64_t>(eb.payoffs[i])) {
                return false;
            }
        }
    }
    return true;
}

std::vector<StartProfile> enumerate_profiles(const Scenario& scenario) {
    PayoffTensor shape = PayoffTensor::empty_for(scenario);
    std::vector<StartProfile> out;
    out.reserve(shape.size());
    for (std::uint64_t k = 0; k < shape.size(); ++k) out.push_back(shape.profile_at(k));
    return out;
}

PayoffTensor build_tensor(const Scenario& scenario, const BuildOptions& opt) {
    if (opt.workers < 1) throw ConfigError("build_tensor: worker count must be >= 1");

    PayoffTensor tensor = PayoffTensor::empty_for(scenario);
    std::ofstream appender;
    if (opt.cache_path) {
        if (std::filesystem::exists(*opt.cache_path)) {
            LoadedCache loaded = read_cache(*opt.cache_path, scenario, /*tolerant=*/true);
            tensor = std::move(loaded.tensor);
            if (loaded.had_partial_tail) {
                // Drop the torn tail so the appended records start on a
                // record boundary.
                cache_store(tensor, *opt.cache_path);
            }
        } else {
            std::ofstream header(*opt.cache_path, std::ios::binary | std::ios::trunc);
            if (!header) throw IoError("cannot create tensor cache: " + opt.cache_path->string());
            std::string bytes = header_bytes(tensor);
            header.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
        appender.open(*opt.cache_path, std::ios::binary | std::ios::app);
        if (!appender) throw IoError("cannot append to tensor cache: " + opt.cache_path->string());
    }

    const std::uint64_t K = tensor.size();
    std::atomic<std::uint64_t> next{0};
    std::atomic<std::uint64_t> done{tensor.completed_count()};
    std::mutex sink_mutex;
    std::vector<std::uint64_t> failures;
    std::exception_ptr first_error;

    auto worker = [&]() {
        for (;;) {
            std::uint64_t k = next.fetch_add(1);
            if (k >= K) return;
            if (tensor.entry(k).present) continue;
            StartProfile profile = tensor.profile_at(k);
            SubgameSolution sol = solve_subgame(scenario, profile.starts, opt.subgame);

            std::lock_guard<std::mutex> lock(sink_mutex);
            if (!sol.certified) {
                failures.push_back(k);
                continue;
            }
            TensorEntry entry;
            entry.payoffs = sol.payoffs;
            entry.iterations = static_cast<std::uint32_t>(sol.iterations);
            entry.residual = sol.residual;
            entry.br_gap = sol.br_gap;
            entry.present = true;
            tensor.set_entry(k, std::move(entry));
            if (appender.is_open()) {
                std::string bytes = record_bytes(tensor, k);
                appender.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
                appender.flush();
            }
            std::uint64_t d = done.fetch_add(1) + 1;
            if (opt.progress) opt.progress(d, K);
        }
    };

    if (opt.workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(opt.workers);
        for (int w = 0; w < opt.workers; ++w) {
            pool.emplace_back([&]() {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard<std::mutex> lock(sink_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::sort(failures.begin(), failures.end());
    tensor.failed_ranks_ = std::move(failures);
    return tensor;
}

void cache_store(const PayoffTensor& tensor, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write tensor cache: " + path.string());
        std::string bytes = header_bytes(tensor);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        for (std::uint64_t k = 0; k < tensor.size(); ++k) {
            if (!tensor.entry(k).present) continue;
            std::string rec = record_bytes(tensor, k);
            out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
        }
        if (!out) throw IoError("failed while writing tensor cache: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

PayoffTensor cache_load(const std::filesystem::path& path, const Scenario& scenario) {
    return read_cache(path, scenario, /*tolerant=*/false).tensor;
}

}  // namespace evgame
