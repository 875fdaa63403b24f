// Copyright 2026 The privnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <exception>
#include <filesystem>
#include <functional>
#include <thread>
#include <utility>

#include "privnet/mpc.hpp"
#include "privnet/nn_graph.hpp"

namespace privnet::test {

// Runs the two compute-party closures on their own threads and rethrows the
// first failure once both have finished.
template <typename F0, typename F1>
void run_pair(F0&& f0, F1&& f1) {
  std::exception_ptr e0, e1;
  std::thread t0([&] {
    try {
      f0();
    } catch (...) {
      e0 = std::current_exception();
    }
  });
  std::thread t1([&] {
    try {
      f1();
    } catch (...) {
      e1 = std::current_exception();
    }
  });
  t0.join();
  t1.join();
  if (e0) std::rethrow_exception(e0);
  if (e1) std::rethrow_exception(e1);
}

// Two connected party contexts with shared-seed triple sources. Good for
// protocol unit tests that don't need a live dealer.
template <RingWord W>
struct TwoParty {
  std::unique_ptr<LocalChannel> c0, c1;
  SeededTripleSource<W> src0, src1;
  PartyContext<W> ctx0, ctx1;

  explicit TwoParty(uint64_t triple_seed, FixedPointCodec codec = {})
      : src0(0, triple_seed), src1(1, triple_seed) {
    auto pair = LocalChannel::make_pair(SessionId{});
    c0 = std::move(pair.first);
    c1 = std::move(pair.second);
    ctx0 = PartyContext<W>{0, c0.get(), nullptr, &src0, codec};
    ctx1 = PartyContext<W>{1, c1.get(), nullptr, &src1, codec};
  }
};

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("privnet_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
};

// Reference classifier with seeded He-initialized weights.
inline ModelGraph reference_model(bool max_pool, uint64_t seed,
                                  std::vector<size_t> input_shape = {150, 125, 1}) {
  ModelGraph g = make_reference_cnn(std::move(input_shape), max_pool);
  Rng rng = make_rng(seed);
  init_weights(g, rng);
  return g;
}

}  // namespace privnet::test
