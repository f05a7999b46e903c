//! Built-in 5x7 pixel font.
//!
//! The same glyph set backs the synthetic document generator and the
//! default template-matching OCR engine, which keeps both self-contained:
//! text the generator prints is text the engine can read back. Coverage is
//! lowercase letters, digits and light punctuation; the generator lowercases
//! its input and the engine emits lowercase text.

use std::sync::LazyLock;

/// Glyph cell width in pixels.
pub const GLYPH_W: usize = 5;
/// Glyph cell height in pixels.
pub const GLYPH_H: usize = 7;
/// Horizontal advance between glyph origins, in cells.
pub const ADVANCE: usize = 6;
/// Vertical advance between text lines, in cells.
pub const LINE_ADVANCE: usize = 9;

/// A glyph bitmap: `GLYPH_H` rows of `GLYPH_W` bits, true = ink.
#[derive(Debug, Clone, Copy)]
pub struct Glyph {
    pub ch: char,
    pub rows: [[bool; GLYPH_W]; GLYPH_H],
}

impl Glyph {
    /// Tight bounding box of the inked cells: `(x0, y0, x1, y1)` inclusive,
    /// or `None` for a blank glyph.
    pub fn tight_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for (y, row) in self.rows.iter().enumerate() {
            for (x, on) in row.iter().enumerate() {
                if *on {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }
}

macro_rules! glyph {
    ($ch:literal, $($row:literal)*) => {
        {
            let mut rows = [[false; GLYPH_W]; GLYPH_H];
            let art = [$($row),*];
            let mut y = 0;
            while y < GLYPH_H {
                let bytes = art[y].as_bytes();
                let mut x = 0;
                while x < GLYPH_W {
                    rows[y][x] = bytes[x] == b'#';
                    x += 1;
                }
                y += 1;
            }
            Glyph { ch: $ch, rows }
        }
    };
}

/// All supported glyphs. `lookup` resolves a char (after lowercasing).
pub static GLYPHS: LazyLock<Vec<Glyph>> = LazyLock::new(|| {
    vec![
        glyph!('a', "     " "     " " ### " "    #" " ####" "#   #" " ####"),
        glyph!('b', "#    " "#    " "#### " "#   #" "#   #" "#   #" "#### "),
        glyph!('c', "     " "     " " ####" "#    " "#    " "#    " " ####"),
        glyph!('d', "    #" "    #" " ####" "#   #" "#   #" "#   #" " ####"),
        glyph!('e', "     " "     " " ### " "#   #" "#####" "#    " " ### "),
        glyph!('f', "  ## " " #   " "#### " " #   " " #   " " #   " " #   "),
        glyph!('g', "     " " ####" "#   #" "#   #" " ####" "    #" " ### "),
        glyph!('h', "#    " "#    " "#### " "#   #" "#   #" "#   #" "#   #"),
        glyph!('i', "  #  " "     " " ##  " "  #  " "  #  " "  #  " " ### "),
        glyph!('j', "   # " "     " "  ## " "   # " "   # " "#  # " " ##  "),
        glyph!('k', "#    " "#    " "#  # " "# #  " "##   " "# #  " "#  # "),
        glyph!('l', " ##  " "  #  " "  #  " "  #  " "  #  " "  #  " " ### "),
        glyph!('m', "     " "     " "## # " "# # #" "# # #" "# # #" "# # #"),
        glyph!('n', "     " "     " "#### " "#   #" "#   #" "#   #" "#   #"),
        glyph!('o', "     " "     " " ### " "#   #" "#   #" "#   #" " ### "),
        glyph!('p', "     " "#### " "#   #" "#   #" "#### " "#    " "#    "),
        glyph!('q', "     " " ####" "#   #" "#   #" " ####" "    #" "    #"),
        glyph!('r', "     " "     " "# ## " "##   " "#    " "#    " "#    "),
        glyph!('s', "     " "     " " ####" "#    " " ### " "    #" "#### "),
        glyph!('t', " #   " " #   " "#### " " #   " " #   " " #   " "  ## "),
        glyph!('u', "     " "     " "#   #" "#   #" "#   #" "#   #" " ####"),
        glyph!('v', "     " "     " "#   #" "#   #" "#   #" " # # " "  #  "),
        glyph!('w', "     " "     " "# # #" "# # #" "# # #" "# # #" " # # "),
        glyph!('x', "     " "     " "#   #" " # # " "  #  " " # # " "#   #"),
        glyph!('y', "     " "#   #" "#   #" " # # " "  #  " " #   " "#    "),
        glyph!('z', "     " "     " "#####" "   # " "  #  " " #   " "#####"),
        glyph!('0', " ### " "#   #" "#  ##" "# # #" "##  #" "#   #" " ### "),
        glyph!('1', "  #  " " ##  " "  #  " "  #  " "  #  " "  #  " " ### "),
        glyph!('2', " ### " "#   #" "    #" "   # " "  #  " " #   " "#####"),
        glyph!('3', " ### " "#   #" "    #" "  ## " "    #" "#   #" " ### "),
        glyph!('4', "   # " "  ## " " # # " "#  # " "#####" "   # " "   # "),
        glyph!('5', "#####" "#    " "#### " "    #" "    #" "#   #" " ### "),
        glyph!('6', "  ## " " #   " "#    " "#### " "#   #" "#   #" " ### "),
        glyph!('7', "#####" "    #" "   # " "  #  " " #   " " #   " " #   "),
        glyph!('8', " ### " "#   #" "#   #" " ### " "#   #" "#   #" " ### "),
        glyph!('9', " ### " "#   #" "#   #" " ####" "    #" "   # " " ##  "),
        glyph!('.', "     " "     " "     " "     " "     " " ##  " " ##  "),
        glyph!(',', "     " "     " "     " "     " "  ## " "  ## " " #   "),
        glyph!('-', "     " "     " "     " "#####" "     " "     " "     "),
        glyph!(':', "     " " ##  " " ##  " "     " " ##  " " ##  " "     "),
        glyph!('/', "    #" "    #" "   # " "  #  " " #   " "#    " "#    "),
    ]
});

/// Resolve a character to its glyph, lowercasing letters. `None` for
/// unsupported characters (the renderer leaves a blank cell).
pub fn lookup(ch: char) -> Option<&'static Glyph> {
    let ch = ch.to_ascii_lowercase();
    GLYPHS.iter().find(|g| g.ch == ch)
}

/// Characters the font can render and the template engine can read.
pub fn supported(ch: char) -> bool {
    ch == ' ' || ch == '\n' || lookup(ch).is_some()
}
