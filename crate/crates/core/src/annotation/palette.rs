/// A box color; person `k` (1-based, in order of appearance) is drawn with
/// `PALETTE[(k - 1) % 30]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaletteColor {
    pub name: &'static str,
    pub rgb: [u8; 3],
}

const fn c(name: &'static str, r: u8, g: u8, b: u8) -> PaletteColor {
    PaletteColor {
        name,
        rgb: [r, g, b],
    }
}

pub const PALETTE: [PaletteColor; 30] = [
    c("red", 230, 25, 75),
    c("green", 60, 180, 75),
    c("yellow", 255, 225, 25),
    c("blue", 0, 130, 200),
    c("orange", 245, 130, 48),
    c("purple", 145, 30, 180),
    c("cyan", 70, 240, 240),
    c("magenta", 240, 50, 230),
    c("lime", 210, 245, 60),
    c("pink", 250, 190, 212),
    c("teal", 0, 128, 128),
    c("lavender", 220, 190, 255),
    c("brown", 170, 110, 40),
    c("beige", 255, 250, 200),
    c("maroon", 128, 0, 0),
    c("mint", 170, 255, 195),
    c("olive", 128, 128, 0),
    c("apricot", 255, 215, 180),
    c("navy", 0, 0, 128),
    c("grey", 128, 128, 128),
    c("white", 255, 255, 255),
    c("black", 0, 0, 0),
    c("gold", 255, 195, 0),
    c("sky", 135, 206, 235),
    c("coral", 255, 127, 80),
    c("indigo", 75, 0, 130),
    c("salmon", 250, 128, 114),
    c("turquoise", 64, 224, 208),
    c("khaki", 195, 176, 145),
    c("plum", 142, 69, 133),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_entries_are_distinct() {
        for (i, a) in PALETTE.iter().enumerate() {
            for b in &PALETTE[i + 1..] {
                assert_ne!(a.name, b.name);
                assert_ne!(a.rgb, b.rgb);
            }
        }
    }
}
