#![allow(dead_code)]

pub mod oracle;

use eorewrite_core::corpus::{attach_sentences, read_conllu};
use eorewrite_core::{Sample, TokenizeMode};

/// Anna Karenina / Tolstoy dialogue used throughout the tests.
pub fn tolstoy() -> Sample {
    Sample::from_texts(
        &["Do you know Anna Karenina?", "Who is Tolstoy?"],
        "He is the author.",
        "Tolstoy is the author of Anna Karenina.",
        TokenizeMode::Word,
    )
}

/// Hand-written parse of [`tolstoy`] (UD conventions).
pub const TOLSTOY_CONLLU: &str = "\
# text = Do you know Anna Karenina?
1\tDo\tdo\tAUX\t_\t_\t3\taux\t_\t_
2\tyou\tyou\tPRON\t_\t_\t3\tnsubj\t_\t_
3\tknow\tknow\tVERB\t_\t_\t0\troot\t_\t_
4\tAnna\tAnna\tPROPN\t_\t_\t3\tobj\t_\t_
5\tKarenina\tKarenina\tPROPN\t_\t_\t4\tflat\t_\t_
6\t?\t?\tPUNCT\t_\t_\t3\tpunct\t_\t_

# text = Who is Tolstoy?
1\tWho\twho\tPRON\t_\t_\t2\tnsubj\t_\t_
2\tis\tbe\tAUX\t_\t_\t0\troot\t_\t_
3\tTolstoy\tTolstoy\tPROPN\t_\t_\t2\tnsubj\t_\t_
4\t?\t?\tPUNCT\t_\t_\t2\tpunct\t_\t_

# text = He is the author.
1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_
2\tis\tbe\tAUX\t_\t_\t0\troot\t_\t_
3\tthe\tthe\tDET\t_\t_\t4\tdet\t_\t_
4\tauthor\tauthor\tNOUN\t_\t_\t2\tattr\t_\t_
5\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_
";

pub fn tolstoy_parsed() -> Sample {
    let mut s = vec![tolstoy()];
    attach_sentences(&mut s, &read_conllu(TOLSTOY_CONLLU).unwrap()).unwrap();
    s.pop().unwrap()
}
