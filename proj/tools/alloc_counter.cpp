#include "alloc_counter.hpp"

#include <atomic>
#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kHeader = 16;

std::atomic<bool> g_enabled{false};
std::atomic<std::size_t> g_generation{0};
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
std::atomic<std::size_t> g_total{0};
std::atomic<std::size_t> g_count{0};

void* allocate(std::size_t n) {
    auto* base = static_cast<unsigned char*>(std::malloc(n + kHeader));
    if (base == nullptr) throw std::bad_alloc();
    auto* words = reinterpret_cast<std::size_t*>(base);
    words[0] = n;
    words[1] = 0;
    if (g_enabled.load(std::memory_order_relaxed)) {
        words[1] = g_generation.load();
        std::size_t live = g_live.fetch_add(n) + n;
        std::size_t peak = g_peak.load();
        while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
        }
        g_total.fetch_add(n);
        g_count.fetch_add(1);
    }
    return base + kHeader;
}

void release(void* p) noexcept {
    if (p == nullptr) return;
    auto* base = static_cast<unsigned char*>(p) - kHeader;
    auto* words = reinterpret_cast<std::size_t*>(base);
    if (words[1] != 0 && words[1] == g_generation.load()) g_live.fetch_sub(words[0]);
    std::free(base);
}

}  // namespace

void* operator new(std::size_t n) { return allocate(n); }
void* operator new[](std::size_t n) { return allocate(n); }
void operator delete(void* p) noexcept { release(p); }
void operator delete[](void* p) noexcept { release(p); }
void operator delete(void* p, std::size_t) noexcept { release(p); }
void operator delete[](void* p, std::size_t) noexcept { release(p); }

namespace psidiff::alloc {

void begin() {
    g_generation.fetch_add(1);
    g_live = 0;
    g_peak = 0;
    g_total = 0;
    g_count = 0;
    g_enabled = true;
}

void end() { g_enabled = false; }

std::size_t peak_bytes() { return g_peak.load(); }
std::size_t total_bytes() { return g_total.load(); }
std::size_t count() { return g_count.load(); }

}  // namespace psidiff::alloc
