#pragma once

#include <stdexcept>
#include <string>

namespace omvp {

/// Raised when a configuration (map width, vehicle counts, config file) is unusable.
class InvalidConfig : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a query names a cell that is not a road cell.
class InvalidPosition : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a caller breaks an operation's shape or size contract.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ContractError(what);
}

}  // namespace omvp
