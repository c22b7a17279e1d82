// Peak live-heap measurement around the stream reader. Global operator
// new/delete are replaced in this binary only.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <new>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "sight/io.hpp"
#include "sight/simulator.hpp"

namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

constexpr std::size_t kHeader = alignof(std::max_align_t);

void* counted_alloc(std::size_t n) {
    auto* base = static_cast<unsigned char*>(std::malloc(n + kHeader));
    if (!base) throw std::bad_alloc();
    *reinterpret_cast<std::size_t*>(base) = n;
    const std::size_t live = g_live.fetch_add(n) + n;
    std::size_t peak = g_peak.load();
    while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
    }
    return base + kHeader;
}

void counted_free(void* p) noexcept {
    if (!p) return;
    auto* base = static_cast<unsigned char*>(p) - kHeader;
    g_live.fetch_sub(*reinterpret_cast<std::size_t*>(base));
    std::free(base);
}

}  // namespace

void* operator new(std::size_t n) { return counted_alloc(n); }
void* operator new[](std::size_t n) { return counted_alloc(n); }
void operator delete(void* p) noexcept { counted_free(p); }
void operator delete[](void* p) noexcept { counted_free(p); }
void operator delete(void* p, std::size_t) noexcept { counted_free(p); }
void operator delete[](void* p, std::size_t) noexcept { counted_free(p); }

namespace sight {
namespace {

namespace fs = std::filesystem;

class StreamMemory : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        path_ = fs::temp_directory_path() / ("sight_io_memory_" + std::to_string(::getpid()) + ".jsonl");
        auto cfg = sim::default_benchmark_config(1);
        cfg.feature_dim = 64;
        io::write_stream(path_, sim::generate_stream(cfg, 20000));
    }
    static void TearDownTestSuite() { fs::remove(path_); }

    static std::size_t peak_over_baseline(auto&& body) {
        const std::size_t base = g_live.load();
        g_peak.store(base);
        body();
        return g_peak.load() - base;
    }

    static inline fs::path path_;
};

TEST_F(StreamMemory, ReaderPeakIsIndependentOfFileSize) {
    const auto file_bytes = fs::file_size(path_);
    ASSERT_GT(file_bytes, 10u << 20);
    std::size_t count = 0;
    double checksum = 0;
    const std::size_t peak = peak_over_baseline([&] {
        io::StreamReader reader(path_, ScoreKind::Logits);
        StreamRecord r;
        while (reader.next(r)) {
            ++count;
            checksum += r.feature[0];
        }
    });
    EXPECT_EQ(count, 20000u);
    EXPECT_TRUE(std::isfinite(checksum));
    // one line buffer, one parsed JSON object, one record, plus stream buffers
    EXPECT_LT(peak, 256u << 10) << "peak " << peak << " bytes for a " << file_bytes << " byte file";
}

TEST_F(StreamMemory, HarnessSeesBufferedRead) {
    const std::size_t peak = peak_over_baseline([&] {
        const auto all = io::read_stream_all(path_, ScoreKind::Logits);
        EXPECT_EQ(all.size(), 20000u);
    });
    EXPECT_GT(peak, 20000u * 64u * sizeof(double));
}

}  // namespace
}  // namespace sight
