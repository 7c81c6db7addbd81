#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace thinkstop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unreadable profile, missing vocabulary, invalid interval.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage or unknown enumerated value.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Precondition of a pure computation violated (empty input, d_i out of range).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Base for everything the chat client can raise.
class ClientError : public Error {
 public:
  using Error::Error;
};

class TransportError : public ClientError {
 public:
  TransportError(const std::string& what, std::uint32_t attempts)
      : ClientError(what + " (after " + std::to_string(attempts) + " attempts)"), attempts_(attempts) {}

  std::uint32_t attempts() const noexcept { return attempts_; }

 private:
  std::uint32_t attempts_;
};

class RemoteError : public ClientError {
 public:
  RemoteError(int status, std::string body, std::uint32_t attempts)
      : ClientError("remote returned HTTP " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)),
        attempts_(attempts) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }
  std::uint32_t attempts() const noexcept { return attempts_; }

 private:
  int status_;
  std::string body_;
  std::uint32_t attempts_;
};

class ProtocolError : public ClientError {
 public:
  using ClientError::ClientError;
};

// Prefix-completion approach requested against an endpoint that lacks it.
class CapabilityError : public ClientError {
 public:
  using ClientError::ClientError;
};

class StorageError : public Error {
 public:
  StorageError(const std::filesystem::path& path, const std::string& what)
      : Error(path.string() + ": " + what), path_(path) {}

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

class SchemaError : public StorageError {
 public:
  SchemaError(const std::filesystem::path& path, int expected, int found)
      : StorageError(path, "unsupported schema_version " + std::to_string(found) + " (expected " +
                               std::to_string(expected) + ")"),
        expected_(expected),
        found_(found) {}

  int expected() const noexcept { return expected_; }
  int found() const noexcept { return found_; }

 private:
  int expected_;
  int found_;
};

class LineError : public StorageError {
 public:
  LineError(const std::filesystem::path& path, std::size_t line, const std::string& what)
      : StorageError(path, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace thinkstop
