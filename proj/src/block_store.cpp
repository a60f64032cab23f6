#include "ecpipe/block_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <algorithm>
#include <charconv>
#include <cstring>
#include <mutex>

#include "ecpipe/error.hpp"

namespace ecpipe {

namespace {

[[noreturn]] void raise_errno(const std::string& what) {
  raise(ErrorCode::io, what + ": " + std::strerror(errno));
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const { return fd_; }

 private:
  int fd_;
};

void pread_exact(int fd, std::size_t offset, std::span<std::uint8_t> out, BlockId block) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::pread(fd, out.data() + done, out.size() - done,
                              static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      raise_errno("read of block " + std::to_string(block));
    }
    if (n == 0) {
      raise(ErrorCode::length_mismatch, "block " + std::to_string(block) + " is shorter than " +
                                            std::to_string(offset + out.size()) + " bytes");
    }
    done += static_cast<std::size_t>(n);
  }
}

class FileHandle : public BlockHandle {
 public:
  FileHandle(int fd, std::size_t size, BlockId block) : fd_(fd), size_(size), block_(block) {}
  std::size_t size() const override { return size_; }
  void read(std::size_t offset, std::span<std::uint8_t> out) override {
    if (offset + out.size() > size_) {
      raise(ErrorCode::length_mismatch, "read past end of block " + std::to_string(block_));
    }
    pread_exact(fd_.get(), offset, out, block_);
  }

 private:
  Fd fd_;
  std::size_t size_;
  BlockId block_;
};

class MemoryHandle : public BlockHandle {
 public:
  MemoryHandle(std::shared_ptr<const Bytes> data, std::shared_ptr<std::atomic<std::uint64_t>> counter)
      : data_(std::move(data)), counter_(std::move(counter)) {}
  std::size_t size() const override { return data_->size(); }
  void read(std::size_t offset, std::span<std::uint8_t> out) override {
    if (offset + out.size() > data_->size()) raise(ErrorCode::length_mismatch, "read past end of block");
    std::memcpy(out.data(), data_->data() + offset, out.size());
    *counter_ += out.size();
  }

 private:
  std::shared_ptr<const Bytes> data_;
  std::shared_ptr<std::atomic<std::uint64_t>> counter_;
};

}  // namespace

BlockStore::BlockStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) raise(ErrorCode::io, "cannot create block directory " + root_.string() + ": " + ec.message());
}

std::filesystem::path BlockStore::path_of(BlockId block) const {
  return root_ / std::to_string(block);
}

void BlockStore::store(BlockId block, std::span<const std::uint8_t> data) {
  std::unique_lock lock(mu_);
  const auto path = path_of(block);
  if (std::filesystem::exists(path)) {
    raise(ErrorCode::duplicate, "block " + std::to_string(block) + " already stored");
  }
  const auto tmp = root_ / ("." + std::to_string(block) + ".tmp");
  {
    Fd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (fd.get() < 0) raise_errno("create " + tmp.string());
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(fd.get(), data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        raise_errno("write " + tmp.string());
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd.get()) != 0) raise_errno("fsync " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) raise(ErrorCode::io, "rename " + tmp.string() + ": " + ec.message());
}

Bytes BlockStore::read(BlockId block, std::optional<std::size_t> expected_size) {
  auto handle = open(block);
  if (expected_size && handle->size() != *expected_size) {
    raise(ErrorCode::length_mismatch, "block " + std::to_string(block) + " has " +
                                          std::to_string(handle->size()) + " bytes, expected " +
                                          std::to_string(*expected_size));
  }
  Bytes out(handle->size());
  handle->read(0, out);
  return out;
}

void BlockStore::remove(BlockId block) {
  std::unique_lock lock(mu_);
  std::error_code ec;
  if (!std::filesystem::remove(path_of(block), ec)) {
    if (ec) raise(ErrorCode::io, "remove block " + std::to_string(block) + ": " + ec.message());
    raise(ErrorCode::not_found, "block " + std::to_string(block) + " not stored");
  }
}

bool BlockStore::contains(BlockId block) const {
  std::shared_lock lock(mu_);
  return std::filesystem::exists(path_of(block));
}

std::vector<BlockId> BlockStore::list() const {
  std::shared_lock lock(mu_);
  std::vector<BlockId> out;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    const std::string name = entry.path().filename().string();
    BlockId id = 0;
    auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), id);
    if (ec == std::errc() && ptr == name.data() + name.size()) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::unique_ptr<BlockHandle> BlockStore::open(BlockId block) {
  std::shared_lock lock(mu_);
  const auto path = path_of(block);
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) {
    if (errno == ENOENT) raise(ErrorCode::not_found, "block " + std::to_string(block) + " not stored");
    raise_errno("open " + path.string());
  }
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    raise_errno("stat " + path.string());
  }
  return std::make_unique<FileHandle>(fd, static_cast<std::size_t>(st.st_size), block);
}

void MemoryBlockStore::put(BlockId block, Bytes data) {
  std::unique_lock lock(mu_);
  blocks_[block] = std::make_shared<const Bytes>(std::move(data));
}

const Bytes& MemoryBlockStore::get(BlockId block) const {
  std::shared_lock lock(mu_);
  auto it = blocks_.find(block);
  if (it == blocks_.end()) raise(ErrorCode::not_found, "block " + std::to_string(block) + " not stored");
  return *it->second;
}

void MemoryBlockStore::erase(BlockId block) {
  std::unique_lock lock(mu_);
  blocks_.erase(block);
}

bool MemoryBlockStore::contains(BlockId block) const {
  std::shared_lock lock(mu_);
  return blocks_.count(block) > 0;
}

std::unique_ptr<BlockHandle> MemoryBlockStore::open(BlockId block) {
  std::shared_lock lock(mu_);
  auto it = blocks_.find(block);
  if (it == blocks_.end()) raise(ErrorCode::not_found, "block " + std::to_string(block) + " not stored");
  return std::make_unique<MemoryHandle>(it->second, bytes_read_);
}

std::uint64_t MemoryBlockStore::bytes_read() const { return *bytes_read_; }

}  // namespace ecpipe
