#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace diffscore {

enum class ErrorKind {
  EmptyCorpus,
  DegenerateVocabulary,
  OutOfVocabulary,
  UnknownId,
  MissingClassMap,
  NoEligiblePositions,
  LengthMismatch,
  ZeroTimesteps,
  SequenceTooLong,
  BadLambda,
  VocabMismatch,
  InvalidQuery,
  ConnectionFailed,
  ProtocolViolation,
  Timeout,
  EmptyCandidate,
  InvalidConfig,
  GridMismatch,
  TooFewSamples,
  InsufficientData,
  TooFewRecords,
  MismatchedSources,
  EmptyTemplates,
  AllTied,
  DegenerateInput,
  ParseError,
  DuplicateId,
  IoError,
  BadModelFile,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::DegenerateVocabulary: return "DegenerateVocabulary";
    case ErrorKind::OutOfVocabulary: return "OutOfVocabulary";
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::MissingClassMap: return "MissingClassMap";
    case ErrorKind::NoEligiblePositions: return "NoEligiblePositions";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ZeroTimesteps: return "ZeroTimesteps";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::BadLambda: return "BadLambda";
    case ErrorKind::VocabMismatch: return "VocabMismatch";
    case ErrorKind::InvalidQuery: return "InvalidQuery";
    case ErrorKind::ConnectionFailed: return "ConnectionFailed";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::EmptyCandidate: return "EmptyCandidate";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::TooFewRecords: return "TooFewRecords";
    case ErrorKind::MismatchedSources: return "MismatchedSources";
    case ErrorKind::EmptyTemplates: return "EmptyTemplates";
    case ErrorKind::AllTied: return "AllTied";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadModelFile: return "BadModelFile";
  }
  return "Unknown";
}

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Remote payload is attached verbatim for protocol failures.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& message, std::string payload)
      : Error(ErrorKind::ProtocolViolation, message), payload_(std::move(payload)) {}

  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

}  // namespace diffscore
