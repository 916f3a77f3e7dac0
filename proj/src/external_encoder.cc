// Copyright 2026 The Pathforge Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// ENC1 client. Frames are little-endian:
//   request   "ENC1" | batch u32 | h u32 | w u32 | c u32 | batch*h*w*c u8
//   response  "ENC1" | batch u32 | dim u32 | batch*dim f32
// A batch=0 request is the handshake and is answered with the dimension.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "binary_io.h"
#include "pathforge/error.h"
#include "pathforge/feature_engine.h"

extern char** environ;

namespace pathforge {
namespace {

thread_local std::optional<int> tls_slot;

constexpr char kMagic[4] = {'E', 'N', 'C', '1'};

void IgnoreSigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

void SetThreadSlotId(std::optional<int> slot) { tls_slot = slot; }
std::optional<int> ThreadSlotId() { return tls_slot; }

ExternalProcessEncoder::ExternalProcessEncoder(
    EncoderSpec spec, std::vector<std::string> argv,
    std::map<std::string, std::string> extra_env, std::chrono::milliseconds timeout)
    : spec_(std::move(spec)),
      argv_(std::move(argv)),
      extra_env_(std::move(extra_env)),
      timeout_(timeout) {
  if (argv_.empty()) Fail(ErrorCode::kInvalidArgument, "external encoder needs a command");
  if (tls_slot && !extra_env_.count("SLOT_ID")) {
    extra_env_["SLOT_ID"] = std::to_string(*tls_slot);
  }
}

ExternalProcessEncoder::~ExternalProcessEncoder() { Stop(); }

void ExternalProcessEncoder::Broken(const std::string& why) {
  Stop();
  Fail(ErrorCode::kExternalEncoderFailure, spec_.name + ": " + why);
}

void ExternalProcessEncoder::Start() {
  IgnoreSigpipe();
  int in_pipe[2], out_pipe[2];  // in: parent -> child stdin
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) Broken("pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    Broken("pipe failed");
  }

  std::vector<std::string> env_storage;
  for (char** e = environ; *e; ++e) {
    const std::string kv(*e);
    const std::string key = kv.substr(0, kv.find('='));
    if (!extra_env_.count(key)) env_storage.push_back(kv);
  }
  for (const auto& [k, v] : extra_env_) env_storage.push_back(k + "=" + v);
  std::vector<char*> envp, args;
  for (auto& s : env_storage) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> argv_copy = argv_;
  for (auto& s : argv_copy) args.push_back(s.data());
  args.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    Fail(ErrorCode::kExternalEncoderFailure,
         spec_.name + ": cannot start " + argv_[0] + ": " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
  ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);

  // Handshake: batch 0 asks for the embedding dimension.
  internal::ByteWriter w;
  w.Bytes(kMagic, 4);
  w.U32(0);
  w.U32(static_cast<uint32_t>(spec_.expected_patch_size));
  w.U32(static_cast<uint32_t>(spec_.expected_patch_size));
  w.U32(3);
  WriteAll(w.buffer().data(), w.size());
  char magic[4];
  uint32_t batch = 0, dim = 0;
  ReadAll(magic, 4);
  ReadAll(&batch, 4);
  ReadAll(&dim, 4);
  if (std::memcmp(magic, kMagic, 4) != 0 || batch != 0) Broken("bad handshake frame");
  if (dim == 0) Broken("handshake reported dim 0");
  if (spec_.dim > 0 && static_cast<int>(dim) != spec_.dim) {
    Broken("handshake dim " + std::to_string(dim) + " != registered " +
           std::to_string(spec_.dim));
  }
  spec_.dim = static_cast<int>(dim);
}

void ExternalProcessEncoder::Stop() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks the child to exit; give it a moment, then kill.
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 50 && !reaped; ++i) {
      reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
      if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!reaped) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }
  pid_ = -1;
}

void ExternalProcessEncoder::WriteAll(const void* data, size_t n) {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  const auto* p = static_cast<const uint8_t*>(data);
  while (n > 0) {
    const ssize_t k = ::write(to_child_, p, n);
    if (k > 0) {
      p += k;
      n -= static_cast<size_t>(k);
      continue;
    }
    if (k < 0 && errno != EAGAIN && errno != EINTR) {
      Broken(std::string("write to child failed: ") + std::strerror(errno));
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) Broken("timed out writing a frame");
    pollfd pfd{to_child_, POLLOUT, 0};
    ::poll(&pfd, 1, static_cast<int>(left.count()));
  }
}

void ExternalProcessEncoder::ReadAll(void* data, size_t n) {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  auto* p = static_cast<uint8_t*>(data);
  while (n > 0) {
    const ssize_t k = ::read(from_child_, p, n);
    if (k > 0) {
      p += k;
      n -= static_cast<size_t>(k);
      continue;
    }
    if (k == 0) Broken("child closed its output (process died?)");
    if (errno != EAGAIN && errno != EINTR) {
      Broken(std::string("read from child failed: ") + std::strerror(errno));
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) Broken("timed out waiting for a frame");
    pollfd pfd{from_child_, POLLIN, 0};
    ::poll(&pfd, 1, static_cast<int>(left.count()));
  }
}

FeatureMatrix ExternalProcessEncoder::Encode(const std::vector<RasterImage>& patches) {
  if (patches.empty()) Fail(ErrorCode::kInvalidArgument, "empty patch batch");
  const int side = spec_.expected_patch_size > 0 ? spec_.expected_patch_size
                                                 : patches.front().width;
  for (const RasterImage& p : patches) {
    if (p.width != side || p.height != side) {
      Fail(ErrorCode::kSizeMismatch, spec_.name + " expects " + std::to_string(side) +
                                         "x" + std::to_string(side) + " patches");
    }
  }
  if (pid_ < 0) Start();

  internal::ByteWriter w;
  w.Bytes(kMagic, 4);
  w.U32(static_cast<uint32_t>(patches.size()));
  w.U32(static_cast<uint32_t>(side));
  w.U32(static_cast<uint32_t>(side));
  w.U32(3);
  for (const RasterImage& p : patches) w.Bytes(p.pixels.data(), p.pixels.size());
  WriteAll(w.buffer().data(), w.size());

  char magic[4];
  uint32_t batch = 0, dim = 0;
  ReadAll(magic, 4);
  ReadAll(&batch, 4);
  ReadAll(&dim, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) Broken("bad response magic");
  if (batch != patches.size()) Broken("response batch size mismatch");
  if (static_cast<int>(dim) != spec_.dim) Broken("response dim mismatch");
  FeatureMatrix out(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(dim));
  ReadAll(out.data(), static_cast<size_t>(out.size()) * sizeof(float));
  if (!out.allFinite()) Broken("non-finite values in response");
  return out;
}

}  // namespace pathforge
