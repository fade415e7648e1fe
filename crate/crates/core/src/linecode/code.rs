use std::fmt;
use std::sync::OnceLock;

use super::LinecodeError;

/// Running disparity between symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RunningDisparity {
    #[default]
    Negative,
    Positive,
}

impl RunningDisparity {
    fn index(self) -> usize {
        match self {
            RunningDisparity::Negative => 0,
            RunningDisparity::Positive => 1,
        }
    }

    /// Value of the running digital sum this state stands for.
    pub fn as_sum(self) -> i32 {
        match self {
            RunningDisparity::Negative => -1,
            RunningDisparity::Positive => 1,
        }
    }

    fn after(self, ones: u32, width: u32) -> Self {
        let d = 2 * ones as i32 - width as i32;
        match d.signum() {
            1 => RunningDisparity::Positive,
            -1 => RunningDisparity::Negative,
            _ => self,
        }
    }
}

/// A 10-bit code group. Bit 9 holds `a` (sent first), bit 0 holds `j`, so
/// the value reads `abcdeifghj` when printed most-significant bit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TenBitSymbol(u16);

impl TenBitSymbol {
    pub fn from_bits(bits: u16) -> Self {
        TenBitSymbol(bits & 0x3FF)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn ones(self) -> u32 {
        self.0.count_ones()
    }

    /// Ones minus zeros: −2, 0 or +2 for valid symbols.
    pub fn disparity_effect(self) -> i32 {
        2 * self.ones() as i32 - 10
    }

    /// Bits in transmission order, `a` first.
    pub fn transmission_order(self) -> impl Iterator<Item = bool> {
        (0..10).rev().map(move |i| (self.0 >> i) & 1 == 1)
    }

    pub fn from_transmission_order(bits: &[bool]) -> Self {
        debug_assert_eq!(bits.len(), 10);
        TenBitSymbol(bits.iter().fold(0u16, |acc, &b| (acc << 1) | b as u16))
    }
}

impl fmt::Display for TenBitSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:010b}", self.0)
    }
}

/// One of the twelve standard control characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ControlCode(u8);

impl ControlCode {
    pub const ALL: [ControlCode; 12] = [
        ControlCode(0x1C),
        ControlCode(0x3C),
        ControlCode(0x5C),
        ControlCode(0x7C),
        ControlCode(0x9C),
        ControlCode(0xBC),
        ControlCode(0xDC),
        ControlCode(0xFC),
        ControlCode(0xF7),
        ControlCode(0xFB),
        ControlCode(0xFD),
        ControlCode(0xFE),
    ];

    /// K28.5, the alignment comma.
    pub const K28_5: ControlCode = ControlCode(0xBC);

    pub fn new(byte: u8) -> Result<Self, LinecodeError> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.0 == byte)
            .ok_or(LinecodeError::InvalidControl(byte))
    }

    pub fn byte(self) -> u8 {
        self.0
    }
}

/// What a symbol carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodeUnit {
    Data(u8),
    Control(ControlCode),
}

impl CodeUnit {
    pub const K28_5: CodeUnit = CodeUnit::Control(ControlCode::K28_5);

    pub fn control(byte: u8) -> Result<Self, LinecodeError> {
        ControlCode::new(byte).map(CodeUnit::Control)
    }

    fn byte(self) -> u8 {
        match self {
            CodeUnit::Data(b) => b,
            CodeUnit::Control(k) => k.0,
        }
    }
}

impl fmt::Display for CodeUnit {
    /// `Dx.y` / `Kx.y` notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.byte();
        let tag = if matches!(self, CodeUnit::Control(_)) { 'K' } else { 'D' };
        write!(f, "{}{}.{}", tag, b & 0x1F, b >> 5)
    }
}

// 5b/6b codes for RD−, abcdei with `a` as the most significant bit.
const SIX_B: [u8; 32] = [
    0b100111, 0b011101, 0b101101, 0b110001, 0b110101, 0b101001, 0b011001, 0b111000,
    0b111001, 0b100101, 0b010101, 0b110100, 0b001101, 0b101100, 0b011100, 0b010111,
    0b011011, 0b100011, 0b010011, 0b110010, 0b001011, 0b101010, 0b011010, 0b111010,
    0b110011, 0b100110, 0b010110, 0b110110, 0b001110, 0b101110, 0b011110, 0b101011,
];
const SIX_B_K28: u8 = 0b001111;

// 3b/4b codes for RD−, fghj.
const FOUR_B_DATA: [u8; 8] = [0b1011, 0b1001, 0b0101, 0b1100, 0b1101, 0b1010, 0b0110, 0b1110];
const FOUR_B_A7: u8 = 0b0111;
const FOUR_B_K28: [u8; 8] = [0b1011, 0b0110, 0b1010, 0b1100, 0b1101, 0b0101, 0b1001, 0b0111];

/// Picks the RD− code or its complement. Unbalanced sub-blocks always
/// alternate; `balanced_alternates` marks the balanced ones that do too.
fn select(code: u8, width: u32, rd: RunningDisparity, balanced_alternates: bool) -> u8 {
    let mask = (1u8 << width) - 1;
    let balanced = 2 * code.count_ones() == width;
    if rd == RunningDisparity::Positive && (!balanced || balanced_alternates) {
        !code & mask
    } else {
        code
    }
}

/// Encodes one unit at the given running disparity.
pub fn encode(unit: CodeUnit, rd: RunningDisparity) -> (TenBitSymbol, RunningDisparity) {
    let byte = unit.byte();
    let x = (byte & 0x1F) as usize;
    let y = (byte >> 5) as usize;
    let k28 = matches!(unit, CodeUnit::Control(_)) && x == 28;

    let six = if k28 {
        select(SIX_B_K28, 6, rd, false)
    } else {
        select(SIX_B[x], 6, rd, x == 7)
    };
    let rd_mid = rd.after(six.count_ones(), 6);

    let four = match unit {
        CodeUnit::Control(_) if k28 => select(FOUR_B_K28[y], 4, rd_mid, true),
        CodeUnit::Control(_) => select(FOUR_B_A7, 4, rd_mid, false),
        CodeUnit::Data(_) if y == 7 => {
            let alternate = match rd_mid {
                RunningDisparity::Negative => matches!(x, 17 | 18 | 20),
                RunningDisparity::Positive => matches!(x, 11 | 13 | 14),
            };
            select(if alternate { FOUR_B_A7 } else { FOUR_B_DATA[7] }, 4, rd_mid, false)
        }
        CodeUnit::Data(_) => select(FOUR_B_DATA[y], 4, rd_mid, y == 3),
    };
    let rd_out = rd_mid.after(four.count_ones(), 4);
    (TenBitSymbol(((six as u16) << 4) | four as u16), rd_out)
}

/// Every valid unit: 256 data bytes then the twelve control codes.
pub fn all_units() -> impl Iterator<Item = CodeUnit> {
    (0..=255u8)
        .map(CodeUnit::Data)
        .chain(ControlCode::ALL.iter().copied().map(CodeUnit::Control))
}

type DecodeEntry = Option<(CodeUnit, RunningDisparity)>;

fn decode_table() -> &'static [[DecodeEntry; 2]; 1024] {
    static TABLE: OnceLock<Box<[[DecodeEntry; 2]; 1024]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([[None; 2]; 1024]);
        for unit in all_units() {
            for rd in [RunningDisparity::Negative, RunningDisparity::Positive] {
                let (sym, rd_out) = encode(unit, rd);
                let slot = &mut t[sym.0 as usize][rd.index()];
                debug_assert!(slot.is_none() || slot.map(|(u, _)| u) == Some(unit));
                *slot = Some((unit, rd_out));
            }
        }
        t
    })
}

/// Decodes one symbol in the context of the current running disparity.
///
/// A symbol that only exists for the opposite disparity is reported as
/// [`LinecodeError::Disparity`], which still names the unit and the running
/// disparity after it so a receiver can resynchronise.
pub fn decode(
    symbol: TenBitSymbol,
    rd: RunningDisparity,
) -> Result<(CodeUnit, RunningDisparity), LinecodeError> {
    let entry = &decode_table()[symbol.0 as usize];
    if let Some(hit) = entry[rd.index()] {
        return Ok(hit);
    }
    let other = 1 - rd.index();
    match entry[other] {
        Some((unit, rd_out)) => Err(LinecodeError::Disparity {
            unit,
            rd_after: rd_out,
        }),
        None => Err(LinecodeError::InvalidSymbol(symbol.0)),
    }
}

/// Stateful encoder for one serial stream.
#[derive(Debug, Clone, Default)]
pub struct LineEncoder {
    rd: RunningDisparity,
}

impl LineEncoder {
    pub fn new(rd: RunningDisparity) -> Self {
        LineEncoder { rd }
    }

    pub fn disparity(&self) -> RunningDisparity {
        self.rd
    }

    pub fn encode(&mut self, unit: CodeUnit) -> TenBitSymbol {
        let (sym, rd) = encode(unit, self.rd);
        self.rd = rd;
        sym
    }

    /// Appends the transmitted bits of `unit`.
    pub fn push(&mut self, unit: CodeUnit, out: &mut Vec<bool>) {
        out.extend(self.encode(unit).transmission_order());
    }

    /// Appends `count` K28.5 idle symbols.
    pub fn idle(&mut self, count: usize, out: &mut Vec<bool>) {
        for _ in 0..count {
            self.push(CodeUnit::K28_5, out);
        }
    }

    pub fn push_bytes(&mut self, bytes: &[u8], out: &mut Vec<bool>) {
        for &b in bytes {
            self.push(CodeUnit::Data(b), out);
        }
    }
}
