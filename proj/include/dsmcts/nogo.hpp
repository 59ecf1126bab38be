#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsmcts {

/// Thrown by GameState::play for occupied targets, suicides, and captures.
struct IllegalMove : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Player : uint8_t { Black = 0, White = 1 };

inline Player opponent(Player p) { return p == Player::Black ? Player::White : Player::Black; }

inline const char* player_name(Player p) { return p == Player::Black ? "black" : "white"; }

enum class Cell : uint8_t { Empty = 0, Black = 1, White = 2 };

inline Cell player_cell(Player p) { return p == Player::Black ? Cell::Black : Cell::White; }

struct Move {
    int8_t row = -1;
    int8_t col = -1;
    bool operator==(const Move&) const = default;
};

inline int move_index(Move m, int size) { return static_cast<int>(m.row) * size + m.col; }

inline Move index_move(int idx, int size) {
    return Move{static_cast<int8_t>(idx / size), static_cast<int8_t>(idx % size)};
}

inline constexpr int kMaxBoardSize = 9;
inline constexpr int kMaxCells = kMaxBoardSize * kMaxBoardSize;

// Column letters skip 'i', matching the common Go text convention.
inline constexpr const char* kColumnLetters = "abcdefghj";

inline std::string move_name(Move m, int) {
    std::string s;
    s += kColumnLetters[m.col];
    s += std::to_string(m.row + 1);
    return s;
}

inline std::optional<Move> parse_move(const std::string& text, int size) {
    if (text.size() < 2) return std::nullopt;
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[0])));
    int col = -1;
    for (int i = 0; i < kMaxBoardSize; ++i) {
        if (kColumnLetters[i] == c) {
            col = i;
            break;
        }
    }
    if (col < 0 || col >= size) return std::nullopt;
    int row = 0;
    for (size_t i = 1; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
        row = row * 10 + (text[i] - '0');
    }
    row -= 1;
    if (row < 0 || row >= size) return std::nullopt;
    return Move{static_cast<int8_t>(row), static_cast<int8_t>(col)};
}

namespace detail {

struct ZobristTable {
    uint64_t cell[kMaxCells][2];
    uint64_t side;
    ZobristTable() {
        std::mt19937_64 rng(0x9c0b0a6d5eed1234ULL);
        for (auto& c : cell) {
            c[0] = rng();
            c[1] = rng();
        }
        side = rng();
    }
};

inline const ZobristTable& zobrist() {
    static const ZobristTable table;
    return table;
}

}  // namespace detail

/**
 * A NoGo position. Stones are never removed: any move that would capture an
 * opponent chain or leave its own chain without liberties is illegal, there
 * are no passes, and the player without a legal move loses.
 *
 * States are immutable; play() returns the successor position.
 */
class GameState {
public:
    explicit GameState(int size) : size_(size) {
        if (size < 1 || size > kMaxBoardSize) throw std::invalid_argument("board size out of range");
        cells_.assign(static_cast<size_t>(size * size), Cell::Empty);
    }

    int size() const { return size_; }
    int num_cells() const { return size_ * size_; }
    Player to_move() const { return to_move_; }
    int ply() const { return ply_; }
    uint64_t hash() const { return hash_; }
    Cell cell(int row, int col) const { return cells_[static_cast<size_t>(row * size_ + col)]; }

    bool in_range(Move m) const {
        return m.row >= 0 && m.row < size_ && m.col >= 0 && m.col < size_;
    }

    bool is_legal(Move m) const {
        if (!in_range(m)) return false;
        int idx = move_index(m, size_);
        if (cells_[static_cast<size_t>(idx)] != Cell::Empty) return false;
        Cell scratch[kMaxCells];
        for (int i = 0; i < num_cells(); ++i) scratch[i] = cells_[static_cast<size_t>(i)];
        Cell me = player_cell(to_move_);
        Cell opp = player_cell(opponent(to_move_));
        scratch[idx] = me;
        if (!chain_has_liberty(scratch, idx)) return false;
        int nbs[4];
        int n = neighbors(idx, nbs);
        for (int i = 0; i < n; ++i) {
            if (scratch[nbs[i]] == opp && !chain_has_liberty(scratch, nbs[i])) return false;
        }
        return true;
    }

    std::vector<Move> legal_moves() const {
        std::vector<Move> moves;
        for (int idx = 0; idx < num_cells(); ++idx) {
            Move m = index_move(idx, size_);
            if (is_legal(m)) moves.push_back(m);
        }
        return moves;
    }

    bool has_legal_move() const {
        for (int idx = 0; idx < num_cells(); ++idx) {
            if (is_legal(index_move(idx, size_))) return true;
        }
        return false;
    }

    bool is_terminal() const { return !has_legal_move(); }

    /// Winner of a finished game: the opponent of the player left without a move.
    Player winner() const {
        if (!is_terminal()) throw std::logic_error("winner() called on non-terminal state");
        return opponent(to_move_);
    }

    GameState play(Move m) const {
        if (!in_range(m)) throw IllegalMove("move off board: " + describe(m));
        int idx = move_index(m, size_);
        if (cells_[static_cast<size_t>(idx)] != Cell::Empty)
            throw IllegalMove("point occupied: " + move_name(m, size_));
        if (!is_legal(m)) throw IllegalMove("suicide or capture: " + move_name(m, size_));
        GameState next(*this);
        next.cells_[static_cast<size_t>(idx)] = player_cell(to_move_);
        next.hash_ ^= detail::zobrist().cell[idx][static_cast<int>(to_move_)];
        next.hash_ ^= detail::zobrist().side;
        next.to_move_ = opponent(to_move_);
        next.ply_ += 1;
        return next;
    }

    /// Board drawing with the top row first: 'x' black, 'o' white, '.' empty.
    std::string to_string() const {
        std::string s;
        for (int row = size_ - 1; row >= 0; --row) {
            for (int col = 0; col < size_; ++col) {
                Cell c = cell(row, col);
                s += c == Cell::Empty ? '.' : (c == Cell::Black ? 'x' : 'o');
                if (col + 1 < size_) s += ' ';
            }
            s += '\n';
        }
        return s;
    }

    /// Rebuilds a position from raw cell contents, recomputing hash and ply.
    static GameState from_cells(int size, const std::vector<Cell>& cells, Player to_move) {
        GameState s(size);
        if (cells.size() != static_cast<size_t>(s.num_cells()))
            throw std::invalid_argument("cell count does not match board size");
        s.cells_ = cells;
        s.to_move_ = to_move;
        for (int idx = 0; idx < s.num_cells(); ++idx) {
            Cell c = cells[static_cast<size_t>(idx)];
            if (c == Cell::Empty) continue;
            s.ply_ += 1;
            s.hash_ ^= detail::zobrist().cell[idx][c == Cell::Black ? 0 : 1];
        }
        if (to_move == Player::White) s.hash_ ^= detail::zobrist().side;
        return s;
    }

private:
    int neighbors(int idx, int out[4]) const {
        int row = idx / size_, col = idx % size_, n = 0;
        if (row > 0) out[n++] = idx - size_;
        if (row + 1 < size_) out[n++] = idx + size_;
        if (col > 0) out[n++] = idx - 1;
        if (col + 1 < size_) out[n++] = idx + 1;
        return n;
    }

    bool chain_has_liberty(const Cell* cells, int start) const {
        Cell color = cells[start];
        bool seen[kMaxCells] = {};
        int stack[kMaxCells];
        int top = 0;
        stack[top++] = start;
        seen[start] = true;
        while (top > 0) {
            int idx = stack[--top];
            int nbs[4];
            int n = neighbors(idx, nbs);
            for (int i = 0; i < n; ++i) {
                int nb = nbs[i];
                if (cells[nb] == Cell::Empty) return true;
                if (cells[nb] == color && !seen[nb]) {
                    seen[nb] = true;
                    stack[top++] = nb;
                }
            }
        }
        return false;
    }

    std::string describe(Move m) const {
        return "(" + std::to_string(m.row) + "," + std::to_string(m.col) + ")";
    }

    int size_;
    std::vector<Cell> cells_;
    Player to_move_ = Player::Black;
    int ply_ = 0;
    uint64_t hash_ = 0;
};

/**
 * Builds a position from rows of 'x'/'o'/'.' characters (top row first,
 * whitespace ignored). Used by tests and debug tooling; the resulting hash
 * matches a state reached by playing the same stones.
 */
inline GameState board_from_text(int size, const std::string& text, Player to_move) {
    std::vector<Cell> cells(static_cast<size_t>(size * size), Cell::Empty);
    int row = size - 1, col = 0;
    for (char ch : text) {
        if (ch == ' ' || ch == '\t') continue;
        if (ch == '\n') {
            if (col > 0) {
                row -= 1;
                col = 0;
            }
            continue;
        }
        Cell c;
        if (ch == '.') c = Cell::Empty;
        else if (ch == 'x' || ch == 'X') c = Cell::Black;
        else if (ch == 'o' || ch == 'O') c = Cell::White;
        else throw std::invalid_argument("bad board character");
        if (row < 0 || col >= size) throw std::invalid_argument("board text out of range");
        cells[static_cast<size_t>(row * size + col)] = c;
        ++col;
    }
    return GameState::from_cells(size, cells, to_move);
}

}  // namespace dsmcts
