#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <atomic>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "ecpipe/types.hpp"

namespace ecpipe {

/// An opened block, read in place.
class BlockHandle {
 public:
  virtual ~BlockHandle() = default;
  virtual std::size_t size() const = 0;
  /// Fills `out` from `offset`; throws Error(length_mismatch) past the end.
  virtual void read(std::size_t offset, std::span<std::uint8_t> out) = 0;
};

class BlockReader {
 public:
  virtual ~BlockReader() = default;
  /// Throws Error(not_found) if the block is absent.
  virtual std::unique_ptr<BlockHandle> open(BlockId block) = 0;
};

/// Blocks as files under a root directory; the file name is the decimal
/// block ID. Writes go to a temporary file that is fsynced and renamed.
class BlockStore : public BlockReader {
 public:
  explicit BlockStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_of(BlockId block) const;

  /// Throws Error(duplicate) if the block exists.
  void store(BlockId block, std::span<const std::uint8_t> data);
  /// Throws Error(not_found) if absent and Error(length_mismatch) if the file
  /// is not exactly `expected_size` bytes (when given).
  Bytes read(BlockId block, std::optional<std::size_t> expected_size = std::nullopt);
  /// Throws Error(not_found) if absent.
  void remove(BlockId block);
  bool contains(BlockId block) const;
  std::vector<BlockId> list() const;

  std::unique_ptr<BlockHandle> open(BlockId block) override;

 private:
  std::filesystem::path root_;
  mutable std::shared_mutex mu_;
};

/// Blocks held in memory; for tests and the in-process benchmark harness.
class MemoryBlockStore : public BlockReader {
 public:
  void put(BlockId block, Bytes data);
  const Bytes& get(BlockId block) const;
  void erase(BlockId block);
  bool contains(BlockId block) const;

  std::unique_ptr<BlockHandle> open(BlockId block) override;

  /// Total bytes served through open() handles.
  std::uint64_t bytes_read() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<BlockId, std::shared_ptr<const Bytes>> blocks_;
  std::shared_ptr<std::atomic<std::uint64_t>> bytes_read_ =
      std::make_shared<std::atomic<std::uint64_t>>(0);
};

}  // namespace ecpipe
