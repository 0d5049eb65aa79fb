//! METUbet phone symbols and their manner-of-articulation groups.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Nasals,
    Stops,
    Liquids,
    BackVowels,
    FrontVowels,
    Glide,
    Affricate,
    Fricatives,
}

impl Attribute {
    pub const ALL: [Attribute; 8] = [
        Attribute::Nasals,
        Attribute::Stops,
        Attribute::Liquids,
        Attribute::BackVowels,
        Attribute::FrontVowels,
        Attribute::Glide,
        Attribute::Affricate,
        Attribute::Fricatives,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Nasals => "Nasals",
            Attribute::Stops => "Stops",
            Attribute::Liquids => "Liquids",
            Attribute::BackVowels => "Back Vowels",
            Attribute::FrontVowels => "Front Vowels",
            Attribute::Glide => "Glide",
            Attribute::Affricate => "Affricate",
            Attribute::Fricatives => "Fricatives",
        }
    }

    /// Lower-case key used in machine-readable reports.
    pub fn key(self) -> &'static str {
        match self {
            Attribute::Nasals => "nasals",
            Attribute::Stops => "stops",
            Attribute::Liquids => "liquids",
            Attribute::BackVowels => "back_vowels",
            Attribute::FrontVowels => "front_vowels",
            Attribute::Glide => "glide",
            Attribute::Affricate => "affricate",
            Attribute::Fricatives => "fricatives",
        }
    }
}

use Attribute::*;

const TABLE: [(&str, Attribute); 38] = [
    ("AA", BackVowels),
    ("A", BackVowels),
    ("I", BackVowels),
    ("O", BackVowels),
    ("U", BackVowels),
    ("E", FrontVowels),
    ("EE", FrontVowels),
    ("IY", FrontVowels),
    ("OE", FrontVowels),
    ("UE", FrontVowels),
    ("M", Nasals),
    ("NN", Nasals),
    ("N", Nasals),
    ("B", Stops),
    ("D", Stops),
    ("GG", Stops),
    ("G", Stops),
    ("KK", Stops),
    ("K", Stops),
    ("P", Stops),
    ("T", Stops),
    ("LL", Liquids),
    ("L", Liquids),
    ("RR", Liquids),
    ("RH", Liquids),
    ("R", Liquids),
    ("H", Fricatives),
    ("J", Fricatives),
    ("F", Fricatives),
    ("S", Fricatives),
    ("SH", Fricatives),
    ("VV", Fricatives),
    ("V", Fricatives),
    ("Z", Fricatives),
    ("ZH", Fricatives),
    ("C", Affricate),
    ("CH", Affricate),
    ("Y", Glide),
];

/// A METUbet phone, or silence. Ordering follows the table with SIL last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phone(u8);

impl Phone {
    pub const SIL: Phone = Phone(TABLE.len() as u8);
    /// Number of distinct labels including SIL.
    pub const COUNT: usize = TABLE.len() + 1;

    pub fn from_index(index: usize) -> Option<Phone> {
        (index < Self::COUNT).then_some(Phone(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn symbol(self) -> &'static str {
        TABLE.get(self.index()).map_or("SIL", |(s, _)| s)
    }

    /// Articulation group; `None` for silence.
    pub fn attribute(self) -> Option<Attribute> {
        TABLE.get(self.index()).map(|(_, a)| *a)
    }

    pub fn is_silence(self) -> bool {
        self == Phone::SIL
    }

    pub fn all() -> impl Iterator<Item = Phone> {
        (0..Self::COUNT).map(|i| Phone(i as u8))
    }
}

impl FromStr for Phone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Phone> {
        if s == "SIL" {
            return Ok(Phone::SIL);
        }
        TABLE
            .iter()
            .position(|(sym, _)| *sym == s)
            .map(|i| Phone(i as u8))
            .ok_or_else(|| Error::UnknownPhone(s.to_string()))
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
