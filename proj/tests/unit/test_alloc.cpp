// Counts global allocations to check that the per-block synthesis path does
// not allocate once the engine exists.

#include <atomic>
#include <cstdlib>
#include <new>

#include "doctest.h"
#include "sounderfeit/synthengine.hpp"

namespace {
std::atomic<std::size_t> g_allocations{0};
}

void* operator new(std::size_t n) {
    ++g_allocations;
    if (void* p = std::malloc(n ? n : 1)) return p;
    throw std::bad_alloc();
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }

using namespace sounderfeit;

TEST_CASE("synth_block does not allocate") {
    const AaeModel model = make_model(condition_by_name("D1_Z2_Y"), Activation::relu, 0.5, 1);
    SynthEngine engine(model);
    TripleBuffer<ControlSnapshot> box(make_snapshot(model));
    ControlSnapshot next = make_snapshot(model);
    std::array<double, kHop> block{};
    engine.synth_block(box.front(), block);

    const std::size_t before = g_allocations.load();
    for (int h = 0; h < 480; ++h) {
        next.y[0] = (h % 50) / 50.0;
        box.back() = next;  // same sizes: vector assignment reuses storage
        box.publish();
        box.update();
        engine.synth_block(box.front(), block);
    }
    CHECK(g_allocations.load() == before);
}
