// Copyright 2026 The sparse-zo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace szo {

// Byte accounting for optimizer-side auxiliary buffers. The resident
// ParameterSet, datasets and model activations are not counted.
class AllocationLedger {
 public:
  void acquire(std::size_t bytes) noexcept {
    current_ += bytes;
    peak_ = std::max(peak_, current_);
  }
  void release(std::size_t bytes) noexcept { current_ -= bytes; }

  std::size_t current() const noexcept { return current_; }
  std::size_t peak() const noexcept { return peak_; }
  void reset_peak() noexcept { peak_ = current_; }

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

// Heap buffer whose lifetime is reported to an optional ledger.
template <typename T>
class ScratchBuffer {
 public:
  ScratchBuffer() = default;
  ScratchBuffer(AllocationLedger* ledger, std::size_t n)
      : ledger_(ledger), data_(n) {
    if (ledger_) ledger_->acquire(bytes());
  }
  ScratchBuffer(const ScratchBuffer&) = delete;
  ScratchBuffer& operator=(const ScratchBuffer&) = delete;
  ScratchBuffer(ScratchBuffer&& o) noexcept
      : ledger_(std::exchange(o.ledger_, nullptr)), data_(std::move(o.data_)) {}
  ScratchBuffer& operator=(ScratchBuffer&& o) noexcept {
    if (this != &o) {
      reset();
      ledger_ = std::exchange(o.ledger_, nullptr);
      data_ = std::move(o.data_);
    }
    return *this;
  }
  ~ScratchBuffer() { reset(); }

  void reset() noexcept {
    if (ledger_) ledger_->release(bytes());
    ledger_ = nullptr;
    data_.clear();
    data_.shrink_to_fit();
  }

  std::size_t size() const noexcept { return data_.size(); }
  std::size_t bytes() const noexcept { return data_.size() * sizeof(T); }
  T* data() noexcept { return data_.data(); }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }

 private:
  AllocationLedger* ledger_ = nullptr;
  std::vector<T> data_;
};

}  // namespace szo
